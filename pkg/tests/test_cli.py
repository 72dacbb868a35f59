import csv
import re

import numpy as np
import pytest

from disorder_unet.cli import evaluate_predictions, main
from disorder_unet.datasets import SequenceRecord, parse_reference, write_reference
from disorder_unet.errors import FormatError
from disorder_unet.metrics import UNKNOWN
from disorder_unet.predictions import parse_prediction, read_prediction_dir, write_prediction
from disorder_unet.trainer import PredictionProfile


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    assert run("make-toy", "--out", root / "data") == 0
    assert run("train", root / "data" / "train.cfg", "--out", root / "model") == 0
    return root


def outputs_equal(a, b, skip=("manifest.json",)):
    names = sorted(p.name for p in a.iterdir() if p.name not in skip)
    assert names == sorted(p.name for p in b.iterdir() if p.name not in skip)
    return all((a / n).read_bytes() == (b / n).read_bytes() for n in names)


class TestTrain:
    def test_artifacts(self, toy):
        model = toy / "model"
        assert (model / "model.dunl").is_file() and (model / "manifest.json").is_file()
        assert len(read_csv(model / "history.csv")) >= 2

    def test_rerun_byte_identical(self, toy, tmp_path):
        assert run("train", toy / "data" / "train.cfg", "--out", tmp_path / "m") == 0
        assert (tmp_path / "m" / "model.dunl").read_bytes() == (toy / "model" / "model.dunl").read_bytes()
        assert (tmp_path / "m" / "history.csv").read_bytes() == (toy / "model" / "history.csv").read_bytes()

    def test_missing_embedding_dir(self, toy, tmp_path, capsys):
        code = run("train", toy / "data" / "train.cfg", "--out", tmp_path / "m", "--set", "embeddings=nowhere")
        assert code == 3
        assert not (tmp_path / "m").exists()
        assert re.fullmatch(r"error\[\w+\]: .+\n", capsys.readouterr().err)

    def test_bad_override(self, toy, tmp_path):
        assert run("train", toy / "data" / "train.cfg", "--out", tmp_path / "m", "--set", "oops") == 2

    def test_unknown_key(self, toy, tmp_path):
        code = run("train", toy / "data" / "train.cfg", "--out", tmp_path / "m", "--set", "kernel_size=5")
        assert code in (2, 5)

    def test_ensemble_mode(self, toy, tmp_path):
        folds = tmp_path / "folds.csv"
        assert run("folds", "--reference", toy / "data" / "references.txt", "--k", 3, "--out", folds) == 0
        code = run(
            "train", toy / "data" / "train.cfg", "--out", tmp_path / "ens",
            "--set", f"folds={folds}", "--set", "mode=ensemble", "--set", "max_epochs=1", "--threads", 2,
        )
        assert code == 0
        assert sorted(p.name for p in (tmp_path / "ens").glob("member_*.dunl")) == [
            "member_00.dunl", "member_01.dunl", "member_02.dunl"]


class TestPredict:
    def test_files_and_format(self, toy, tmp_path):
        data = toy / "data"
        assert run("predict", "--checkpoint", toy / "model" / "model.dunl", "--fasta", data / "sequences.fasta",
                   "--embeddings", data / "embeddings", "--out", tmp_path / "p") == 0
        refs = parse_reference(data / "references.txt")
        files = sorted((tmp_path / "p").glob("*.caid"))
        assert len(files) == len(refs)
        for ref in refs:
            lines = (tmp_path / "p" / f"{ref.id}.caid").read_text().splitlines()
            assert len(lines) == len(ref) + 1 and lines[0] == f">{ref.id}"
            for line in lines[1:]:
                score = line.split("\t")[2]
                assert re.fullmatch(r"[01]\.\d{3}", score) and 0.0 <= float(score) <= 1.0

    def test_duplicate_checkpoint_is_idempotent(self, toy, tmp_path):
        data = toy / "data"
        ckpt = toy / "model" / "model.dunl"
        common = ["--fasta", data / "sequences.fasta", "--embeddings", data / "embeddings"]
        assert run("predict", "--checkpoint", ckpt, *common, "--out", tmp_path / "a") == 0
        assert run("predict", "--checkpoint", ckpt, ckpt, *common, "--out", tmp_path / "b") == 0
        assert outputs_equal(tmp_path / "a", tmp_path / "b")

    def test_missing_embedding_aborts(self, toy, tmp_path, capsys):
        fasta = tmp_path / "x.fasta"
        fasta.write_text(">nobody\nACDE\n")
        code = run("predict", "--checkpoint", toy / "model" / "model.dunl", "--fasta", fasta,
                   "--embeddings", toy / "data" / "embeddings", "--out", tmp_path / "p")
        assert code == 3
        assert "nobody" in capsys.readouterr().err
        assert not (tmp_path / "p").exists()

    def test_class_from_unrounded_score(self, tmp_path):
        p = PredictionProfile("t", "AC", np.array([0.5004, 0.5]), np.array([1, 0]))
        text = write_prediction(p, tmp_path).read_text()
        assert text.splitlines()[1:] == ["1\tA\t0.500\t1", "2\tC\t0.500\t0"]


class TestEvaluate:
    def test_round_trip_overfits_toy(self, toy, tmp_path):
        data = toy / "data"
        run("predict", "--checkpoint", toy / "model" / "model.dunl", "--fasta", data / "sequences.fasta",
            "--embeddings", data / "embeddings", "--out", tmp_path / "p")
        assert run("evaluate", "--predictions", tmp_path / "p", "--reference", data / "references.txt",
                   "--out", tmp_path / "e") == 0
        pooled = next(r for r in read_csv(tmp_path / "e" / "aggregate.csv") if r["aggregation"] == "pooled")
        assert float(pooled["roc_auc"]) > 0.95

    def _refs(self):
        return [
            SequenceRecord("a", "ACDEF", np.array([1, 1, 0, 0, UNKNOWN], np.int8)),
            SequenceRecord("b", "GHIK", np.array([0, 1, 0, 0], np.int8)),
        ]

    def test_perfect_predictor(self):
        refs = self._refs()
        preds = {r.id: PredictionProfile(r.id, r.sequence, np.clip(r.labels, 0, 1).astype(float), None) for r in refs}
        _, agg, skipped = evaluate_predictions(preds, refs)
        assert not skipped
        assert (agg["pooled"].auc, agg["pooled"].mcc, agg["pooled"].f1) == (1.0, 1.0, 1.0)

    def test_constant_half(self):
        refs = self._refs() + [SequenceRecord("c", "AAA", np.array([0, 0, 0], np.int8))]
        preds = {r.id: PredictionProfile(r.id, r.sequence, np.full(len(r), 0.5), None) for r in refs}
        rows, agg, _ = evaluate_predictions(preds, refs)
        by_id = {r.target_id: r for r in rows}
        assert by_id["a"].auc == 0.5 and by_id["b"].auc == 0.5
        assert by_id["c"].auc is None
        assert agg["pooled"].auc == 0.5

    def test_hand_computed_micro_benchmark(self):
        refs = self._refs()
        preds = {
            "a": PredictionProfile("a", "ACDEF", np.array([0.9, 0.4, 0.6, 0.1, 0.77]), None),
            "b": PredictionProfile("b", "GHIK", np.array([0.2, 0.7, 0.3, 0.8]), None),
        }
        _, agg, _ = evaluate_predictions(preds, refs)
        # positives {0.9, 0.4, 0.7}, negatives {0.6, 0.1, 0.2, 0.3, 0.8}
        # wins: 0.9 -> 5, 0.4 -> 3, 0.7 -> 4 ; 12 of 15 pairs
        assert agg["pooled"].auc == pytest.approx(12 / 15, abs=1e-15)
        # threshold 0.5: tp=2 (0.9, 0.7), fn=1, fp=2 (0.6, 0.8), tn=3
        assert agg["pooled"].f1 == pytest.approx(4 / 7, abs=1e-15)
        assert agg["pooled"].mcc == pytest.approx((2 * 3 - 2 * 1) / np.sqrt(4 * 3 * 5 * 4), abs=1e-15)

    def test_pdb_ignores_unknown_scores(self, rng):
        refs = self._refs()
        base = {r.id: PredictionProfile(r.id, r.sequence, rng.random(len(r)), None) for r in refs}
        _, agg1, _ = evaluate_predictions(base, refs)
        base["a"].scores[4] = 1 - base["a"].scores[4]
        _, agg2, _ = evaluate_predictions(base, refs)
        assert agg1 == agg2

    def test_nox_rejects_unknowns(self):
        refs = self._refs()
        preds = {r.id: PredictionProfile(r.id, r.sequence, np.full(len(r), 0.3), None) for r in refs}
        with pytest.raises(FormatError):
            evaluate_predictions(preds, refs, mode="nox")

    def test_skips_and_reports(self, tmp_path):
        refs = self._refs()
        write_reference(refs, tmp_path / "ref.txt")
        pred_dir = tmp_path / "p"
        pred_dir.mkdir()
        write_prediction(PredictionProfile("a", "ACD", np.array([0.1, 0.2, 0.3]), None), pred_dir)
        write_reference(refs + [SequenceRecord("c", "AC", np.array([0, 1], np.int8))], tmp_path / "ref.txt")
        write_prediction(PredictionProfile("c", "AC", np.array([0.2, 0.9]), None), pred_dir)
        assert run("evaluate", "--predictions", pred_dir, "--reference", tmp_path / "ref.txt",
                   "--out", tmp_path / "e") == 0
        skipped = {r["id"]: r["reason"] for r in read_csv(tmp_path / "e" / "skipped.csv")}
        assert set(skipped) == {"a", "b"} and "length" in skipped["a"]

    def test_exclusion(self):
        refs = self._refs()
        preds = {r.id: PredictionProfile(r.id, r.sequence, np.full(len(r), 0.3), None) for r in refs}
        rows, _, _ = evaluate_predictions(preds, refs, exclusion_ids=["a"])
        assert [r.target_id for r in rows] == ["b"]


class TestProfile:
    @pytest.fixture
    def pred_dir(self, tmp_path):
        d = tmp_path / "p"
        d.mkdir()
        write_prediction(PredictionProfile("T1", "MKVLA", np.array([0.1, 0.55, 0.9, 0.5, 0.2]), None), d)
        return d

    def test_rows(self, pred_dir, tmp_path):
        assert run("profile", "--predictions", pred_dir, "--ids", "T1", "--out", tmp_path / "o") == 0
        rows = read_csv(tmp_path / "o" / "T1.profile.csv")
        assert len(rows) == 5
        assert rows[1] == {"position": "2", "residue": "K", "score": "0.550", "class": "1"}

    def test_absent_id(self, pred_dir, tmp_path, capsys):
        assert run("profile", "--predictions", pred_dir, "--ids", "T9", "--out", tmp_path / "o") == 3
        assert "T9" in capsys.readouterr().err

    def test_round_trip(self, pred_dir, tmp_path):
        run("profile", "--predictions", pred_dir, "--ids", "T1", "--out", tmp_path / "o")
        direct = parse_prediction(pred_dir / "T1.caid")
        rows = read_csv(tmp_path / "o" / "T1.profile.csv")
        assert [float(r["score"]) for r in rows] == direct.scores.tolist()
        assert [int(r["class"]) for r in rows] == direct.classes.tolist()
        assert read_prediction_dir(pred_dir)["T1"].sequence == "MKVLA"


class TestFolds:
    def test_rerun_identical(self, toy, tmp_path):
        ref = toy / "data" / "references.txt"
        assert run("folds", "--reference", ref, "--k", 4, "--seed", 2, "--out", tmp_path / "a.csv") == 0
        assert run("folds", "--reference", ref, "--k", 4, "--seed", 2, "--out", tmp_path / "b.csv") == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        counts = np.bincount([int(r["fold"]) for r in read_csv(tmp_path / "a.csv")])
        assert counts.tolist() == [6, 6, 6, 6]

    def test_too_many_folds(self, toy, tmp_path):
        assert run("folds", "--reference", toy / "data" / "references.txt", "--k", 99, "--out", tmp_path / "f.csv") == 5


def test_search_arch(capsys):
    assert run("search-arch", "--top", 3) == 0
    first = capsys.readouterr().out
    assert run("search-arch", "--top", 3) == 0
    assert capsys.readouterr().out == first
    assert "629029" in first.replace(",", "").splitlines()[0]


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["evaluate"])
    assert exc.value.code == 2


def test_format_error_exit(tmp_path, toy):
    bad = tmp_path / "bad.dunl"
    bad.write_bytes(b"XXXX" + (toy / "model" / "model.dunl").read_bytes()[4:])
    data = toy / "data"
    code = run("predict", "--checkpoint", bad, "--fasta", data / "sequences.fasta",
               "--embeddings", data / "embeddings", "--out", tmp_path / "p")
    assert code == 4

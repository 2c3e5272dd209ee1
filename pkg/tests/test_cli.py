import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from epbayes.cli import main, prior_from_json, read_summary
from epbayes.npmle import DiscretePrior1D, DiscretePrior2D

DATA = Path(__file__).parent / "data"
RAW_GROUPS = "A,A,A,B,B,B,B"


def read_tsv(path):
    lines = Path(path).read_text().splitlines()
    head = lines[0].split("\t")
    return head, [dict(zip(head, ln.split("\t"))) for ln in lines[1:]]


def two_point_summaries(path, n=2000, seed=0):
    rng = np.random.default_rng(seed)
    lam = np.where(np.arange(n) % 2 == 0, 0.5, 2.0)
    va = lam * rng.chisquare(2, n) / 2
    vb = rng.chisquare(2, n) / 2
    with open(path, "w") as fh:
        fh.write("feature_id\tmean_a\tvar_a\tk_a\tmean_b\tvar_b\tk_b\n")
        for i in range(n):
            fh.write(f"x{i}\t0\t{float(va[i])!r}\t3\t0\t{float(vb[i])!r}\t3\n")


class TestIngest:
    def test_summary_row(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text("feature_id\tmean_a\tvar_a\tk_a\tmean_b\tvar_b\tk_b\ng1\t1.0\t1.0\t3\t2.0\t4.0\t3\n")
        (f,) = read_summary(str(p))
        assert f.feature_id == "g1" and f.lambda_hat == 0.25

    def test_group_of_one(self, tmp_path, capsys):
        p = tmp_path / "r.tsv"
        p.write_text("f1\t1.0\t2.0\t3.0\n")
        assert main(["test", "--input", str(p), "--format", "raw", "--groups", "A,A,B", "--methods", "ev"]) != 0
        assert "f1" in capsys.readouterr().err

    def test_bad_number_has_line(self, tmp_path, capsys):
        p = tmp_path / "s.tsv"
        p.write_text("feature_id\tmean_a\tvar_a\tk_a\tmean_b\tvar_b\tk_b\ng1\t1\t1\t3\t2\t4\t3\ng2\t1\tx\t3\t2\t4\t3\n")
        assert main(["test", "--input", str(p), "--methods", "ev"]) == 1
        assert f"{p}:3:" in capsys.readouterr().err

    def test_group_label_mismatch(self, capsys):
        rc = main(["test", "--input", str(DATA / "raw_small.tsv"), "--format", "raw", "--groups", "A,A,B",
                   "--methods", "ev"])
        assert rc == 1 and "--groups" in capsys.readouterr().err

    def test_unit_weights_match_unweighted(self, tmp_path):
        ids = [ln.split("\t")[0] for ln in (DATA / "raw_mixture.tsv").read_text().splitlines()]
        w = tmp_path / "w.tsv"
        w.write_text("".join(f"{i}" + "\t1" * 7 + "\n" for i in ids))
        outs = []
        for extra in ([], ["--weights", str(w)]):
            out = tmp_path / f"o{len(extra)}.tsv"
            argv = ["test", "--input", str(DATA / "raw_mixture.tsv"), "--format", "raw", "--groups", RAW_GROUPS,
                    "--grid-size", "200", "--grid-size-2d", "30", "--output", str(out)] + extra
            assert main(argv) == 0
            outs.append(out.read_text())
        assert outs[0] == outs[1]

    def test_raw_summary_round_trip(self, tmp_path):
        common = ["--methods", "vrepb,dvepb,ev,welch,bf", "--grid-size", "200", "--grid-size-2d", "30"]
        s, o1, o2 = tmp_path / "s.tsv", tmp_path / "o1.tsv", tmp_path / "o2.tsv"
        assert main(["test", "--input", str(DATA / "raw_mixture.tsv"), "--format", "raw", "--groups", RAW_GROUPS,
                     "--summary-out", str(s), "--output", str(o1)] + common) == 0
        assert main(["test", "--input", str(s), "--output", str(o2)] + common) == 0
        assert o1.read_text() == o2.read_text()


class TestTestCommand:
    def test_golden(self, tmp_path):
        out = tmp_path / "o.tsv"
        assert main(["test", "--input", str(DATA / "summary_small.tsv"), "--methods", "ev,welch,bf,pooled",
                     "--output", str(out)]) == 0
        assert out.read_text() == (DATA / "golden_summary_small.tsv").read_text()

    def test_golden_against_scipy(self):
        _, rows = read_tsv(DATA / "golden_summary_small.tsv")
        feats = read_summary(str(DATA / "summary_small.tsv"))
        for row, f in zip(rows, feats):
            if f.degenerate:
                assert row["p_ev"] == row["q_ev"] == row["p_bf"] == "NA"
                continue
            for col, eq in (("p_ev", True), ("p_welch", False)):
                ref = stats.ttest_ind_from_stats(f.mean_a, np.sqrt(f.var_a), f.k_a, f.mean_b, np.sqrt(f.var_b),
                                                 f.k_b, equal_var=eq).pvalue
                np.testing.assert_allclose(float(row[col]), ref, rtol=1e-12)

    def test_smoke_ev(self, tmp_path):
        p = tmp_path / "s.tsv"
        p.write_text((DATA / "summary_small.tsv").read_text().replace("0.0\t3\t2.0\t0.0", "0.5\t3\t2.0\t0.5"))
        out = tmp_path / "o.tsv"
        assert main(["test", "--input", str(p), "--methods", "ev", "--output", str(out)]) == 0
        head, rows = read_tsv(out)
        assert head == ["feature_id", "t_bf", "lambda_hat", "p_ev", "q_ev"]
        assert len(rows) == 4 and all(r["p_ev"] != "NA" and r["q_ev"] != "NA" for r in rows)

    def test_column_order(self, tmp_path):
        out = tmp_path / "o.tsv"
        assert main(["test", "--input", str(DATA / "summary_small.tsv"), "--methods", "bf,ev",
                     "--output", str(out)]) == 0
        assert read_tsv(out)[0] == ["feature_id", "t_bf", "lambda_hat", "p_bf", "q_bf", "p_ev", "q_ev"]

    def test_prior_dump(self, tmp_path):
        out, pr = tmp_path / "o.tsv", tmp_path / "p.json"
        assert main(["test", "--input", str(DATA / "raw_mixture.tsv"), "--format", "raw", "--groups", RAW_GROUPS,
                     "--methods", "vrepb,dvepb", "--grid-size", "200", "--grid-size-2d", "30",
                     "--output", str(out), "--prior-out", str(pr)]) == 0
        dumped = json.loads(pr.read_text())
        assert [d["kind"] for d in dumped] == ["vr", "dv"]
        assert isinstance(prior_from_json(dumped[0]), DiscretePrior1D)
        assert isinstance(prior_from_json(dumped[1]), DiscretePrior2D)

    def test_partial_outputs_removed(self, tmp_path):
        out = tmp_path / "o.tsv"
        rc = main(["test", "--input", str(DATA / "summary_small.tsv"), "--methods", "ev", "--output", str(out),
                   "--prior-out", str(tmp_path / "missing_dir" / "p.json")])
        assert rc == 1
        assert list(tmp_path.iterdir()) == []

    def test_console_script(self):
        res = subprocess.run(
            [sys.executable, "-m", "epbayes.cli", "test", "--input", str(DATA / "summary_small.tsv"),
             "--methods", "ev"], capture_output=True, text=True,
        )
        assert res.returncode == 0
        assert res.stdout.splitlines()[0] == "feature_id\tt_bf\tlambda_hat\tp_ev\tq_ev"
        assert "1 of 4 features" in res.stderr


class TestFitPrior:
    def test_vr_certificate(self, tmp_path):
        s, pr = tmp_path / "s.tsv", tmp_path / "p.json"
        two_point_summaries(s)
        assert main(["fit-prior", "--kind", "vr", "--input", str(s), "--output", str(pr)]) == 0
        d = json.loads(pr.read_text())
        assert d["kind"] == "vr" and d["certificate_gap"] <= 1e-5
        prior = prior_from_json(d)
        np.testing.assert_allclose(prior.weights.sum(), 1.0, atol=1e-12)

    def test_dv_dump_keys(self, tmp_path):
        s, pr = tmp_path / "s.tsv", tmp_path / "p.json"
        two_point_summaries(s, n=300)
        assert main(["fit-prior", "--kind", "dv", "--input", str(s), "--grid-size-2d", "20",
                     "--prior-out", str(pr)]) == 0
        d = json.loads(pr.read_text())
        assert {"support_a", "support_b", "indices", "weights", "loglik", "certificate_gap", "iterations"} <= set(d)
        assert len(d["indices"]) == len(d["weights"])


class TestSimulateCommand:
    def test_deterministic(self, tmp_path):
        outs = []
        for i in range(2):
            js, tsv = tmp_path / f"r{i}.json", tmp_path / f"r{i}.tsv"
            argv = ["simulate", "--scenario", "unequal", "--ka", "3", "--kb", "9", "--reps", "2", "--seed", "7",
                    "--n", "1000", "--output", str(js), "--tsv-output", str(tsv)]
            assert main(argv) == 0
            outs.append((js.read_text(), tsv.read_text()))
        assert outs[0] == outs[1]
        assert len(outs[0][1].splitlines()) == 1 + 5

    def test_kb_range(self, tmp_path):
        js = tmp_path / "r.json"
        assert main(["simulate", "--ka", "3", "--kb", "3-4", "--reps", "1", "--n", "200", "--methods", "ev",
                     "--output", str(js)]) == 0
        assert json.loads(js.read_text())["series"]["unequal"]["ev"]["k_b"] == [3, 4]

    def test_bad_config(self, capsys):
        assert main(["simulate", "--pi0", "0", "--reps", "1"]) == 1
        assert "error" in capsys.readouterr().err

import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from conftest import make_params, random_article
from pgswitch.analysis import pearson_r
from pgswitch.cli import main
from pgswitch.decode import read_traces
from pgswitch.weights import load_weights, save_weights


@pytest.fixture
def workspace(tmp_path):
    p = make_params(seed=1, coverage=True, scale=1.0)
    save_weights(p, tmp_path / "m.pgsw")
    rng = np.random.default_rng(0)
    arts = [" ".join(random_article(rng, int(rng.integers(6, 12)))) for _ in range(4)]
    (tmp_path / "arts.txt").write_text("\n".join(arts) + "\n")
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def decode(ws, out, *extra):
    return run("decode", "--weights", ws / "m.pgsw", "--articles", ws / "arts.txt",
               "--max-len", 25, "--out", ws / out, *extra)


class TestUsage:
    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as e:
            run("decode", "--nonsense")
        assert e.value.code != 0
        assert "usage:" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as e:
            run("frobnicate")
        assert e.value.code != 0 and "usage:" in capsys.readouterr().err

    def test_flag_validation(self, workspace, capsys):
        with pytest.raises(SystemExit):
            decode(workspace, "t.jsonl", "--pmin", "1.5")
        with pytest.raises(SystemExit):
            run("sweep", "--weights", "x", "--articles", "y", "--out", "z", "--pmin-list", "0,2")


class TestDecode:
    def test_pmin_zero_matches_default(self, workspace):
        assert decode(workspace, "a.jsonl") == 0
        assert decode(workspace, "b.jsonl", "--pmin", "0") == 0
        assert (workspace / "a.jsonl").read_bytes() == (workspace / "b.jsonl").read_bytes()

    def test_idempotent_and_parallel(self, workspace):
        decode(workspace, "a.jsonl")
        decode(workspace, "b.jsonl", "--jobs", "2")
        assert (workspace / "a.jsonl").read_bytes() == (workspace / "b.jsonl").read_bytes()

    def test_pmin_one(self, workspace):
        decode(workspace, "t.jsonl", "--pmin", "1.0")
        for tr in read_traces(workspace / "t.jsonl"):
            assert all(st.p_gen == 1.0 for st in tr.steps)
            assert all(st.origin == "vocab" for st in tr.steps)

    def test_coverage_flag_must_match(self, workspace, capsys):
        assert decode(workspace, "t.jsonl", "--no-coverage") == 1
        assert "coverage" in capsys.readouterr().err

    def test_bad_weights_diagnostic(self, workspace, capsys):
        (workspace / "m.pgsw").write_bytes(b"garbage")
        assert decode(workspace, "t.jsonl") == 1
        assert "m.pgsw" in capsys.readouterr().err

    def test_bad_traces_diagnostic(self, workspace, capsys):
        (workspace / "bad.jsonl").write_text('{"type": "header", "format": "pgswitch-trace"}\n{oops\n')
        assert run("analyze", "--traces", workspace / "bad.jsonl", "--out", workspace / "an") == 1
        assert "bad.jsonl:" in capsys.readouterr().err


class TestAnalyze:
    def test_reports(self, workspace):
        decode(workspace, "t.jsonl")
        assert run("analyze", "--traces", workspace / "t.jsonl", "--out", workspace / "an",
                   "--report-format", "svg") == 0
        traces = read_traces(workspace / "t.jsonl")
        n = sum(len(t.steps) for t in traces)
        with open(workspace / "an" / "stats.csv") as fh:
            stats = {r["statistic"]: r["value"] for r in csv.DictReader(fh)}
        p = [s.p_gen for t in traces for s in t.steps]
        assert stats["r_gen_pooled"] == repr(pearson_r(p, [s.h_gen for t in traces for s in t.steps]))
        assert stats["r_copy_pooled"] == repr(pearson_r(p, [s.h_copy for t in traces for s in t.steps]))
        with open(workspace / "an" / "tokens.csv") as fh:
            assert len(list(csv.DictReader(fh))) == n
        with open(workspace / "an" / "histogram.csv") as fh:
            assert sum(int(r["total"]) for r in csv.DictReader(fh)) == n
        ET.parse(workspace / "an" / "histogram.svg")
        first = (workspace / "an" / "stats.csv").read_bytes()
        run("analyze", "--traces", workspace / "t.jsonl", "--out", workspace / "an", "--report-format", "svg")
        assert (workspace / "an" / "stats.csv").read_bytes() == first


class TestSweep:
    def test_one_summary_per_pair(self, workspace):
        assert run("sweep", "--weights", workspace / "m.pgsw", "--articles", workspace / "arts.txt",
                   "--max-len", 20, "--out", workspace / "sw") == 0
        rows = (workspace / "sw" / "sweep.tsv").read_text().splitlines()[1:]
        pairs = [tuple(r.split("\t")[:2]) for r in rows]
        assert len(pairs) == 4 * 5 == len(set(pairs))
        assert [p for _, p in pairs[:5]] == ["0", "0.25", "0.5", "0.75", "1"]


class TestTrainAndProbe:
    def test_corpus_train_decode(self, tmp_path):
        assert run("corpus", "--kind", "copy", "--size", 30, "--vocab-size", 20, "--out", tmp_path / "c.tsv",
                   "--vocab-out", tmp_path / "v.txt") == 0
        assert run("train", "--corpus", tmp_path / "c.tsv", "--vocab", tmp_path / "v.txt", "--steps", 3,
                   "--emb-dim", 4, "--hid-dim", 6, "--out", tmp_path / "m.pgsw", "--loss-log", tmp_path / "l.csv") == 0
        p = load_weights(tmp_path / "m.pgsw")
        assert p.config.vocab_size == 20 and p.config.hid_dim == 6
        assert len((tmp_path / "l.csv").read_text().splitlines()) == 4
        before = (tmp_path / "m.pgsw").read_bytes()
        run("train", "--corpus", tmp_path / "c.tsv", "--vocab", tmp_path / "v.txt", "--steps", 3,
            "--emb-dim", 4, "--hid-dim", 6, "--out", tmp_path / "m.pgsw")
        assert (tmp_path / "m.pgsw").read_bytes() == before

    def test_malformed_corpus(self, tmp_path, capsys):
        (tmp_path / "c.tsv").write_text("a b\tc\nbroken\n")
        assert run("train", "--corpus", tmp_path / "c.tsv", "--out", tmp_path / "m") == 1
        assert "c.tsv:2" in capsys.readouterr().err

    def test_features_and_probe(self, workspace):
        decode(workspace, "t.jsonl")
        traces = read_traces(workspace / "t.jsonl")
        # flat parses: one sentence per summary, every word an NN under S
        with open(workspace / "p.txt", "w") as fh:
            for t in traces:
                if t.summary_tokens:
                    fh.write(t.doc_id + "\t(S " + " ".join(f"(NN {w})" for w in t.summary_tokens) + ")\n")
        (workspace / "lm.txt").write_text("\n".join(" ".join(t.source) for t in traces) + "\n")
        assert run("features", "--traces", workspace / "t.jsonl", "--parses", workspace / "p.txt",
                   "--lm-corpus", workspace / "lm.txt", "--out", workspace / "f.csv") == 0
        header = (workspace / "f.csv").read_text().splitlines()[0].split(",")
        assert {"h_gen", "h_copy", "h_ngram", "d_edge", "d_root"} <= set(header)

    def test_probe_outputs(self, tmp_path, capsys):
        from test_probe import TestFeatureSetReport
        TestFeatureSetReport().build(seed=1, n=400).write_csv(tmp_path / "f.csv")
        assert run("probe", "--matrix", tmp_path / "f.csv", "--out", tmp_path / "pr") == 0
        out = capsys.readouterr().out
        assert "Full Model R^2:" in out
        assert (tmp_path / "pr" / "probe.txt").read_text().strip() == out.strip()
        anova = (tmp_path / "pr" / "anova.csv").read_text().splitlines()
        assert anova[0] == "reduced,full,ss_diff,df_diff,F,p" and len(anova) > 1

import json

import numpy as np
import pytest

from conftest import make_params, random_article
from pgswitch.decode import (DecodeConfig, beam_search, beam_search_decode, decode_corpus, greedy_decode,
                             read_traces, record_steps, write_traces)
from pgswitch.model import decode_step, encode, initial_state
from pgswitch.vocab import START_ID, STOP_ID


def brute_force_best(enc, params, max_len):
    """Exhaustive search over all sequences up to max_len ending in STOP."""
    best = (-np.inf, None)
    frontier = [([], 0.0, initial_state(params, enc))]
    for _ in range(max_len):
        nxt = []
        for toks, lp, st in frontier:
            out = decode_step(st, toks[-1] if toks else START_ID, enc, params)
            for w, p in enumerate(out.dist.probs):
                if p == 0:
                    continue
                cand = (toks + [w], lp + float(np.log(p)), out.state)
                if w == STOP_ID:
                    if cand[1] > best[0]:
                        best = (cand[1], cand[0])
                else:
                    nxt.append(cand)
        frontier = nxt
    return best


class TestBeamSearch:
    def test_width_one_equals_greedy(self):
        for seed in range(10):
            p = make_params(seed=seed, scale=1.0)
            enc = encode(p, random_article(np.random.default_rng(seed), 10))
            ids, _, _, _ = beam_search(enc, p, DecodeConfig(beam_width=1, max_len=30))
            assert ids == greedy_decode(enc, p, 30)

    def test_wide_beam_finds_exhaustive_optimum(self):
        p = make_params(seed=11, vocab_words=["a", "b"], scale=2.0)
        p.tensors["out.b"][STOP_ID] += 1.5
        enc = encode(p, ["a", "q", "b"])
        n_ext = len(p.vocab) + 1
        score, best = brute_force_best(enc, p, 3)
        ids, s, truncated, _ = beam_search(enc, p, DecodeConfig(beam_width=n_ext ** 3, max_len=3))
        assert not truncated
        assert ids == best and s == pytest.approx(score, abs=1e-12)

    def test_max_len_respected_and_truncation_flag(self):
        p = make_params(seed=12)
        p.tensors["out.b"][STOP_ID] = -50.0
        p.tensors["switch.beta_ptr"][0] = 50.0
        enc = encode(p, ["w01", "w02"])
        ids, _, truncated, _ = beam_search(enc, p, DecodeConfig(beam_width=3, max_len=7))
        assert len(ids) == 7 and truncated and STOP_ID not in ids

    def test_score_is_sum_of_logprobs(self):
        p = make_params(seed=13, scale=1.0)
        enc = encode(p, random_article(np.random.default_rng(13), 8))
        ids, score, _, _ = beam_search(enc, p, DecodeConfig(beam_width=3, max_len=20))
        steps = record_steps(enc, p, ids)
        assert score == pytest.approx(sum(s.logprob for s in steps), abs=1e-9)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DecodeConfig(beam_width=0)
        with pytest.raises(ValueError):
            DecodeConfig(p_min=1.5)
        with pytest.raises(ValueError):
            beam_search_decode(["w01"], make_params(), DecodeConfig(coverage_enabled=True))


class TestTraces:
    def trace(self, p_min=0.0, coverage=True, seed=20):
        p = make_params(seed=seed, coverage=coverage, scale=1.0)
        art = random_article(np.random.default_rng(seed), 12)
        return beam_search_decode(art, p, DecodeConfig(max_len=25, p_min=p_min), doc_id="d")

    def test_stop_is_last_step_and_not_in_summary(self):
        tr = self.trace()
        if not tr.truncated:
            assert tr.steps[-1].token == "[STOP]"
        assert "[STOP]" not in tr.summary_tokens
        assert len(tr.summary_tokens) == sum(st.token != "[STOP]" for st in tr.steps)

    def test_coverage_telescopes(self):
        tr = self.trace()
        run = np.zeros(len(tr.source))
        for st in tr.steps:
            np.testing.assert_array_equal(np.array(st.coverage), run)
            assert abs(sum(st.coverage) - st.step) < 1e-9
            run = run + np.array(st.attn)

    def test_pmin_one(self):
        tr = self.trace(p_min=1.0)
        assert all(st.p_gen == 1.0 for st in tr.steps)
        assert all(st.origin == "vocab" for st in tr.steps)

    def test_jsonl_round_trip(self, tmp_path):
        trs = [self.trace(seed=s) for s in (21, 22)]
        path = tmp_path / "t.jsonl"
        write_traces(trs, path)
        back = read_traces(path)
        write_traces(back, tmp_path / "u.jsonl")
        assert path.read_bytes() == (tmp_path / "u.jsonl").read_bytes()
        assert back[0].steps[3] == trs[0].steps[3]
        first = json.loads(path.read_text().splitlines()[0])
        assert first["type"] == "header" and first["format"] == "pgswitch-trace"

    def test_read_errors_name_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"type": "step"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_traces(path)
        path.write_text("not json\n")
        with pytest.raises(ValueError, match="bad.jsonl:1"):
            read_traces(path)

    def test_parallel_matches_serial(self):
        p = make_params(seed=30, scale=1.0)
        arts = [random_article(np.random.default_rng(k), 8) for k in range(4)]
        cfg = DecodeConfig(max_len=15)
        a = decode_corpus(arts, p, cfg, jobs=1)
        b = decode_corpus(arts, p, cfg, jobs=2)
        assert [t.jsonl_lines() for t in a] == [t.jsonl_lines() for t in b]

from random import Random

import pytest

from judged_decode import oracle
from judged_decode.spec_decode import SpecDecodeConfig, spec_decode_generate, spec_decode_step

from support import D, flat_table, one_hot


class TestSpecDecodeStep:
    def test_identical_models_accept_full_window(self):
        model = flat_table(D(0.4, 0.3, 0.3))
        cfg = SpecDecodeConfig(window=3, max_new_tokens=8)
        rng = Random(0)
        for _ in range(500):
            emitted, trace = spec_decode_step(model, model, (), cfg, rng)
            assert trace.n == 3
            assert not trace.residual_used

    def test_disjoint_one_hots_emit_target_token(self):
        draft = flat_table(one_hot(1, 3))
        target = flat_table(one_hot(2, 3))
        cfg = SpecDecodeConfig(window=1, max_new_tokens=2)
        rng = Random(1)
        for _ in range(200):
            emitted, trace = spec_decode_step(draft, target, (), cfg, rng)
            assert trace.n == 0
            assert emitted == [2]

    def test_monotone_prefix_acceptance(self):
        dr, tg = oracle.random_table_pair(Random(8), 3, depth=2, rational=False)
        cfg = SpecDecodeConfig(window=3, max_new_tokens=8)
        rng = Random(5)
        for _ in range(300):
            _, trace = spec_decode_step(dr, tg, (0,), cfg, rng)
            # accepted positions form the prefix 0..n-1: every accepted draw
            # is at or below its ratio, and position n (if any) exceeded it
            ratios = [p / q for p, q in zip(trace.target_token_probs, trace.draft_token_probs)]
            for i in range(trace.n):
                assert trace.accept_draws[i] <= ratios[i]
            if trace.n < 3:
                assert trace.accept_draws[trace.n] > ratios[trace.n]


class TestLosslessness:
    @pytest.mark.parametrize("vocab,window", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 2)])
    def test_enumerated_window_equals_target_joint(self, vocab, window):
        for seed in range(6):
            draft, target = oracle.random_table_pair(Random(1000 + seed), vocab, depth=window)
            report = oracle.verify_spec_decode(draft, target, window, prompt=(0,))
            assert report.exact_equal
            assert report.event_partition_exact()


class TestSpecDecodeGenerate:
    def test_identical_models_rate_one(self):
        model = flat_table(D(0.5, 0.5, 0.0))
        cfg = SpecDecodeConfig(window=2, max_new_tokens=20)
        result = spec_decode_generate(model, model, (0,), cfg, Random(3))
        assert result.acceptance_rate == 1.0
        assert len(result.output_tokens) == 20

    def test_eos_stops_generation(self):
        model = flat_table(D(0.0, 0.0, 1.0))  # eos is token 2
        cfg = SpecDecodeConfig(window=2, max_new_tokens=20)
        result = spec_decode_generate(model, model, (0,), cfg, Random(3))
        assert result.output_tokens == [2]
        assert result.traces[-1].stop == "eos"

    def test_budget_respected(self):
        dr, tg = oracle.random_table_pair(Random(8), 3, depth=1, rational=False)
        cfg = SpecDecodeConfig(window=4, max_new_tokens=9)
        result = spec_decode_generate(dr, tg, (0,), cfg, Random(4))
        assert len(result.output_tokens) <= 9

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from judged_decode import dist
from judged_decode.models import (
    ContextTooLong,
    DEFAULT_PREFIX_TEMPLATE,
    NGramModel,
    PreferenceAssignment,
    PreferenceDescription,
    PrefixedSource,
    SequenceSource,
    TableModel,
    build_prefixed_context,
    load_model,
    load_model_file,
    render_preference_prefix,
    split_round_robin,
)

from support import D, write_json


def small_table():
    return TableModel(
        {(): D(0.5, 0.5), (0,): D(0.9, 0.1), (1,): D(0.2, 0.8)},
        D(0.5, 0.5),
        eos_token=1,
        max_context=16,
    )


class TestTableModel:
    def test_direct_lookup(self):
        m = TableModel({(): D(0.5, 0.5)}, D(0.5, 0.5), eos_token=1)
        assert m.next_distribution(()).probs == (0.5, 0.5)

    def test_suffix_keying(self):
        m = small_table()
        assert m.next_distribution((1, 1, 0)).probs == (0.9, 0.1)
        assert m.next_distribution((0, 1)).probs == (0.2, 0.8)

    def test_default_fallback(self):
        m = TableModel({(0,): D(1.0, 0.0)}, D(0.25, 0.75), eos_token=1)
        assert m.next_distribution((1,)).probs == (0.25, 0.75)

    def test_referential_transparency(self):
        m = small_table()
        assert m.next_distribution((0,)) is m.next_distribution((0,))

    def test_context_too_long(self):
        m = small_table()
        with pytest.raises(ContextTooLong):
            m.next_distribution(tuple([0] * 17))

    def test_invalid_row_rejected(self):
        with pytest.raises(ValueError):
            TableModel({(): D(0.5, 0.6)}, D(0.5, 0.5), eos_token=1)
        with pytest.raises(ValueError):
            TableModel({(0, 1): D(0.5, 0.5)}, D(0.5, 0.5), depth=1, eos_token=1)

    def test_json_round_trip(self, tmp_path):
        m = small_table()
        path = write_json(tmp_path / "table.json", m.to_json_dict())
        loaded = load_model_file(path)
        assert isinstance(loaded, TableModel)
        assert loaded.rows == m.rows
        assert loaded.default == m.default
        assert (loaded.depth, loaded.eos_token, loaded.max_context) == (m.depth, m.eos_token, m.max_context)


class TestNGramModel:
    def test_unigram_count_ratio(self):
        m = NGramModel.from_stream([0, 0, 1], order=1, vocab_size=2, smoothing=0.0)
        for ctx in [(), (0,), (1, 0, 1)]:
            assert m.next_distribution(ctx).probs == pytest.approx((2 / 3, 1 / 3))

    def test_bigram_counts(self):
        m = NGramModel.from_stream([0, 1, 0, 1, 0, 0], order=2, vocab_size=2, smoothing=0.0)
        # after 0: continuations 1,1,0 -> [1/3, 2/3]
        assert m.next_distribution((0,)).probs == pytest.approx((1 / 3, 2 / 3))

    def test_smoothing_strictly_positive(self):
        m = NGramModel.from_stream([0, 0, 0], order=2, vocab_size=3, smoothing=0.5)
        d = m.next_distribution((2,))  # unseen context
        assert all(p > 0 for p in d.probs)
        dist.check(d)

    def test_json_round_trip(self, tmp_path):
        m = NGramModel.from_stream([0, 1, 2, 1, 0, 2, 2, 1], order=3, vocab_size=3, smoothing=0.25, eos_token=2)
        path = write_json(tmp_path / "ngram.json", m.to_json_dict())
        loaded = load_model_file(path)
        assert isinstance(loaded, NGramModel)
        assert loaded.counts == m.counts
        assert (loaded.order, loaded.smoothing, loaded.eos_token) == (3, 0.25, 2)
        assert loaded.next_distribution((1, 2)).probs == m.next_distribution((1, 2)).probs


class TestBatch:
    @pytest.mark.parametrize("model", [small_table(), NGramModel.from_stream([0, 1, 0], 2, 2, smoothing=0.5)])
    def test_batch_matches_singles(self, model):
        ctxs = [(), (0,), (1,), (0, 1)]
        batch = model.next_distributions_batch(ctxs)
        assert batch == [model.next_distribution(c) for c in ctxs]

    def test_duplicate_contexts(self):
        m = small_table()
        a, b = m.next_distributions_batch([(0,), (0,)])
        assert a == b

    def test_growing_prefixes(self):
        m = small_table()
        lam = 3
        drafted = (0, 1, 0)
        ctxs = [drafted[:i] for i in range(lam + 1)]
        batch = m.next_distributions_batch(ctxs)
        assert len(batch) == lam + 1
        assert batch[1] == m.next_distribution((0,))

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            small_table().next_distributions_batch([])


class TestToyText:
    def test_tokenize_extracts_ids(self):
        m = small_table()
        assert m.tokenize("[Preference] satisfy: 1 0; 1 [Prompt] ") == [1, 0, 1]

    def test_tokenize_rejects_out_of_vocab(self):
        with pytest.raises(ValueError):
            small_table().tokenize("7")

    def test_detokenize_round_trip(self):
        m = small_table()
        tokens = [0, 1, 1, 0]
        assert m.tokenize(m.detokenize(tokens)) == tokens


class TestPreferences:
    def test_description_requires_text(self):
        with pytest.raises(ValueError):
            PreferenceDescription("")

    def test_assignment_requires_both_sides(self):
        a = (PreferenceDescription("0", "a"),)
        with pytest.raises(ValueError):
            PreferenceAssignment(a, ())
        with pytest.raises(ValueError):
            PreferenceAssignment((), a)
        with pytest.raises(ValueError):
            PreferenceAssignment(a, a, schedule="sometimes")

    def test_round_robin_split(self):
        prefs = [PreferenceDescription(t, t) for t in ("0", "1", "2")]
        assignment = split_round_robin(prefs)
        assert [d.text for d in assignment.side_a] == ["0", "2"]
        assert [d.text for d in assignment.side_b] == ["1"]

    def test_round_robin_single_lands_on_both(self):
        assignment = split_round_robin([PreferenceDescription("0", "p")])
        assert assignment.side_a == assignment.side_b

    def test_render_template(self):
        descs = (PreferenceDescription("be 0", "x"), PreferenceDescription("be 1", "y"))
        text = render_preference_prefix(descs)
        assert text == "[Preference] Your response must satisfy: be 0; be 1 [Prompt] "

    def test_build_prefixed_context(self):
        m = small_table()
        assignment = PreferenceAssignment(
            (PreferenceDescription("1 0", "a"),),
            (PreferenceDescription("0 0", "b"),),
        )
        expected_prefix = tuple(m.tokenize(render_preference_prefix(assignment.side_a)))
        ctx = build_prefixed_context(assignment, "A", (1, 1), (0,), m)
        assert ctx == expected_prefix + (1, 1) + (0,)

    def test_build_prefixed_context_too_long(self):
        m = small_table()  # max_context 16
        assignment = PreferenceAssignment(
            (PreferenceDescription("1 0 1 0 1 0 1 0", "a"),),
            (PreferenceDescription("0", "b"),),
        )
        with pytest.raises(ContextTooLong):
            build_prefixed_context(assignment, "A", tuple([0] * 8), (0,), m)

    @given(st.lists(st.integers(0, 1), min_size=0, max_size=6))
    def test_prefix_stability(self, generated):
        m = small_table()
        assignment = PreferenceAssignment(
            (PreferenceDescription("1 0", "a"),),
            (PreferenceDescription("0", "b"),),
        )
        base = build_prefixed_context(assignment, "A", (1,), tuple(generated), m)
        extended = build_prefixed_context(assignment, "A", (1,), tuple(generated) + (0,), m)
        assert extended == base + (0,)


class TestSequenceSource:
    def test_position_indexing(self):
        s = SequenceSource([D(1.0, 0.0), D(0.0, 1.0)], base_len=2)
        assert s.next_distribution((5, 5)).probs == (1.0, 0.0)
        assert s.next_distribution((5, 5, 0)).probs == (0.0, 1.0)
        with pytest.raises(ContextTooLong):
            s.next_distribution((5, 5, 0, 1))


class TestPrefixedSource:
    def test_prepends_prefix(self):
        m = small_table()
        s = PrefixedSource(m, (0,))
        assert s.next_distribution(()) == m.next_distribution((0,))
        assert s.next_distribution((1,)) == m.next_distribution((0, 1))

    def test_max_context_shrinks(self):
        m = small_table()
        s = PrefixedSource(m, (0, 1, 0))
        assert s.max_context == 13
        with pytest.raises(ContextTooLong):
            s.next_distribution(tuple([0] * 14))


class TestBackendValidity:
    def test_every_reachable_context_yields_valid_distribution(self):
        from itertools import product
        from random import Random

        from judged_decode.oracle import random_table_pair

        table, _ = random_table_pair(Random(23), 3, depth=2, rational=False)
        ngram = NGramModel.from_stream([0, 1, 2, 1, 0, 0, 2], order=2, vocab_size=3, smoothing=0.5)
        for model in (table, ngram):
            for length in range(4):
                for ctx in product(range(3), repeat=length):
                    dist.check(model.next_distribution(ctx))


class TestRemoteTimeout:
    def test_env_resolution(self, monkeypatch):
        from judged_decode.models import resolve_remote_timeout_ms

        monkeypatch.delenv("JUDGED_DECODE_REMOTE_TIMEOUT_MS", raising=False)
        assert resolve_remote_timeout_ms() == 30000
        monkeypatch.setenv("JUDGED_DECODE_REMOTE_TIMEOUT_MS", "2500")
        assert resolve_remote_timeout_ms() == 2500
        assert resolve_remote_timeout_ms(100) == 100


class TestLoadModel:
    def test_scheme_required(self):
        with pytest.raises(ValueError):
            load_model("nosuchscheme")
        with pytest.raises(ValueError):
            load_model("weird:path")

    def test_kind_mismatch(self, tmp_path):
        m = small_table()
        path = write_json(tmp_path / "t.json", m.to_json_dict())
        with pytest.raises(ValueError):
            load_model(f"ngram:{path}")

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_model(f"table:{tmp_path}/absent.json")

    def test_unknown_kind(self, tmp_path):
        path = write_json(tmp_path / "x.json", {"kind": "mystery"})
        with pytest.raises(ValueError):
            load_model_file(path)

import numpy as np
import pytest

from iocner.corpus import Sentence, bio_from_spans, check_bio, spans_from_bio, EntitySpan
from iocner.evaluation import (
    PRF,
    SyntheticSpec,
    entity_prf,
    format_records,
    format_table,
    make_synthetic_corpus,
    parse_records,
    type_distribution,
    unseen_mention_fraction,
)
from iocner.features import TYPE_FEATURE, compute_features


def labels(scheme, n, *spans):
    return bio_from_spans([EntitySpan(*s) for s in spans], n, scheme)


class TestPRF:
    def test_zero_conventions(self):
        m = PRF()
        assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0

    def test_values(self):
        m = PRF(tp=3, fp=1, fn=2)
        assert m.precision == 0.75 and m.recall == 0.6
        assert m.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)
        assert m.support == 5


class TestEntityPrf:
    def test_identity(self, scheme):
        _, _, test = make_synthetic_corpus(SyntheticSpec(n_train=5, n_val=2, n_test=20, seed=4))
        m = entity_prf(test, [s.gold_labels for s in test], scheme)
        assert m.micro.f1 == 1.0
        assert all(v.f1 == 1.0 for v in m.per_type.values() if v.support)

    def test_all_outside(self, scheme):
        g = [labels(scheme, 3, (0, 1, "domain"))]
        m = entity_prf(g, [[0, 0, 0]], scheme)
        assert m.micro.recall == 0.0 and m.micro.f1 == 0.0

    def test_exact_span_rule(self, scheme):
        g = [labels(scheme, 3, (0, 2, "domain"))]
        p = [labels(scheme, 3, (0, 1, "domain"))]
        m = entity_prf(g, p, scheme).micro
        assert (m.tp, m.fp, m.fn) == (0, 1, 1) and m.f1 == 0.0

    def test_wrong_type_counts_twice(self, scheme):
        g = [labels(scheme, 2, (0, 1, "domain"))]
        p = [labels(scheme, 2, (0, 1, "URL"))]
        m = entity_prf(g, p, scheme)
        assert m["domain"].fn == 1 and m["URL"].fp == 1

    def test_hand_counted(self, scheme):
        gold = [
            labels(scheme, 5, (0, 2, "attacker"), (3, 4, "IPv4")),
            labels(scheme, 4, (1, 2, "IPv4")),
            labels(scheme, 3, (0, 3, "attacker")),
        ]
        pred = [
            labels(scheme, 5, (0, 2, "attacker"), (4, 5, "IPv4")),
            labels(scheme, 4, (1, 2, "IPv4"), (3, 4, "attacker")),
            labels(scheme, 3, (0, 2, "attacker")),
        ]
        m = entity_prf(gold, pred, scheme)
        # attacker: s0 hit; s1 spurious; s2 wrong boundary
        assert (m["attacker"].tp, m["attacker"].fp, m["attacker"].fn) == (1, 2, 1)
        # IPv4: s0 wrong position; s1 hit
        assert (m["IPv4"].tp, m["IPv4"].fp, m["IPv4"].fn) == (1, 1, 1)
        assert (m.micro.tp, m.micro.fp, m.micro.fn) == (2, 3, 2)
        assert m.micro.precision == pytest.approx(0.4)
        assert m.micro.recall == pytest.approx(0.5)

    def test_pooled_counts(self, scheme, rng):
        _, _, test = make_synthetic_corpus(SyntheticSpec(n_train=5, n_val=2, n_test=30, seed=1))
        pred = []
        for s in test:
            sp = [sp for sp in spans_from_bio(s.gold_labels, scheme) if rng.random() < 0.6]
            pred.append(bio_from_spans(sp, len(s.tokens), scheme))
        m = entity_prf(test, pred, scheme).micro
        n_gold = sum(len(spans_from_bio(s.gold_labels, scheme)) for s in test)
        n_pred = sum(len(spans_from_bio(p, scheme)) for p in pred)
        assert m.tp + m.fn == n_gold and m.tp + m.fp == n_pred

    def test_permutation_symmetry(self, scheme, rng):
        _, _, test = make_synthetic_corpus(SyntheticSpec(n_train=5, n_val=2, n_test=25, seed=2))
        pred = [[0] * len(s.tokens) if k % 3 == 0 else s.gold_labels for k, s in enumerate(test)]
        a = entity_prf(test, pred, scheme)
        order = rng.permutation(len(test))
        b = entity_prf([test[i] for i in order], [pred[i] for i in order], scheme)
        assert a.micro == b.micro and a.per_type == b.per_type

    def test_alignment_errors(self, scheme):
        with pytest.raises(ValueError):
            entity_prf([[0, 0]], [], scheme)
        with pytest.raises(ValueError):
            entity_prf([[0, 0]], [[0]], scheme)

    def test_token_level(self, scheme):
        g = [labels(scheme, 3, (0, 2, "attacker"))]
        p = [labels(scheme, 3, (0, 1, "attacker"))]
        assert entity_prf(g, p, scheme).micro.f1 == 0.0
        m = entity_prf(g, p, scheme, token_level=True).micro
        assert (m.tp, m.fp, m.fn) == (1, 0, 1)


class TestReports:
    def metrics(self, scheme):
        g = [labels(scheme, 4, (0, 1, "domain"), (2, 3, "URL"))]
        p = [labels(scheme, 4, (0, 1, "domain"), (3, 4, "URL"))]
        return entity_prf(g, p, scheme)

    def test_table_layout(self, scheme):
        lines = format_table(self.metrics(scheme)).strip().splitlines()
        assert len(lines) == 1 + 11 + 1
        assert lines[-1].startswith("micro average")

    def test_records_round_trip(self, scheme):
        m = self.metrics(scheme)
        parsed = parse_records(format_records(m))
        assert parsed["micro"] == (m.micro.precision, m.micro.recall, m.micro.f1, m.micro.support)
        for t, v in m.per_type.items():
            assert parsed[t] == (v.precision, v.recall, v.f1, v.support)


class TestSynthetic:
    def test_deterministic(self):
        a = make_synthetic_corpus(SyntheticSpec(n_train=20, n_val=5, n_test=10, seed=7))
        b = make_synthetic_corpus(SyntheticSpec(n_train=20, n_val=5, n_test=10, seed=7))
        for x, y in zip(a, b):
            assert [(s.surfaces, s.gold_labels) for s in x] == [(s.surfaces, s.gold_labels) for s in y]

    def test_sizes_and_bio(self, scheme):
        tr, va, te = make_synthetic_corpus(SyntheticSpec(n_train=20, n_val=5, n_test=10))
        assert (len(tr), len(va), len(te)) == (20, 5, 10)
        for s in tr + va + te:
            check_bio(s.gold_labels, scheme)

    @pytest.mark.parametrize("fraction", [0.0, 0.5, 1.0])
    def test_unseen_fraction_exact(self, scheme, fraction):
        tr, _, te = make_synthetic_corpus(
            SyntheticSpec(n_train=100, n_val=5, n_test=60, unseen_fraction=fraction, seed=3))
        n = sum(len(spans_from_bio(s.gold_labels, scheme)) for s in te)
        assert unseen_mention_fraction(tr, te, scheme) == pytest.approx(round(fraction * n) / n)

    def test_ioc_surfaces_fire_their_feature(self, scheme, fconfig):
        tr, _, te = make_synthetic_corpus(SyntheticSpec(n_train=200, n_val=1, n_test=50, seed=9))
        checked = 0
        for s in tr + te:
            for span in spans_from_bio(s.gold_labels, scheme):
                col = TYPE_FEATURE.get(span.entity_type)
                if col is None:
                    continue
                tok = s.surfaces[span.start]
                assert compute_features(tok, fconfig)[col] == 1, (span.entity_type, tok)
                checked += 1
        assert checked > 100

    def test_type_restriction(self):
        tr, _, _ = make_synthetic_corpus(
            SyntheticSpec(n_train=50, n_val=1, n_test=1, type_counts={"IPv4": 1, "URL": 2}))
        assert set(type_distribution(tr)) == {"IPv4", "URL"}

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(n_train=0)
        with pytest.raises(ValueError):
            SyntheticSpec(unseen_fraction=1.5)

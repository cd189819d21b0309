import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from iocner.corpus import BIOError
from iocner.estimator import BaselineTagger, IOCTagger
from iocner.evaluation import SyntheticSpec, make_synthetic_corpus
from iocner.features import SpellingFeatures
from iocner.validation import as_sentences, check_label_sequences, check_token_sequences

TINY = dict(token_dim=6, char_dim=4, char_hidden=3, hidden=5, attention=4, ffn_hidden=6,
            max_epochs=2, patience=2)


@pytest.fixture(scope="module")
def data():
    tr, va, te = make_synthetic_corpus(SyntheticSpec(n_train=10, n_val=4, n_test=5, seed=6))
    as_xy = lambda ss: ([s.surfaces for s in ss], [[lab for lab in s.gold_labels] for s in ss])  # noqa: E731
    return as_xy(tr), as_xy(va), as_xy(te)


@pytest.fixture(scope="module")
def fitted(data):
    (X, y), (Xv, yv), _ = data
    return IOCTagger(**TINY, random_state=3).fit(X, y, Xv, yv)


class TestValidation:
    def test_token_inputs(self):
        out = check_token_sequences(["a b", ["c", "d"]])
        assert [[t.surface for t in s] for s in out] == [["a", "b"], ["c", "d"]]

    def test_rejects_string(self):
        with pytest.raises(TypeError):
            check_token_sequences("a b")
        with pytest.raises(TypeError):
            check_token_sequences([3])

    def test_labels(self, scheme):
        X = check_token_sequences([["a", "b"]])
        assert check_label_sequences([["B-domain", "O"]], X, scheme) == [[scheme.index("B-domain"), 0]]
        with pytest.raises(ValueError):
            check_label_sequences([["O"]], X, scheme)
        with pytest.raises(BIOError):
            check_label_sequences([["O", "I-domain"]], X, scheme)
        with pytest.raises(ValueError):
            check_label_sequences([], X, scheme)

    def test_as_sentences(self, scheme):
        s = as_sentences([["a"]], [["O"]], scheme)
        assert s[0].gold_labels == [0]
        assert as_sentences(s) == s


class TestIOCTagger:
    def test_params(self):
        est = IOCTagger(hidden=7)
        params = est.get_params()
        assert params["hidden"] == 7 and params["learning_rate"] == 0.005
        assert clone(est).get_params() == params

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            IOCTagger().predict([["x"]])

    def test_predict_shapes(self, fitted, data):
        X = data[2][0]
        pred = fitted.predict(X)
        assert [len(p) for p in pred] == [len(x) for x in X]
        assert all(isinstance(lab, str) for p in pred for lab in p)
        assert len(fitted.predict_spans(X)) == len(X)
        assert 0.0 <= fitted.score(*data[2]) <= 1.0
        assert fitted.history_.best_epoch >= 1

    def test_deterministic(self, fitted, data):
        (X, y), (Xv, yv), _ = data
        other = IOCTagger(**TINY, random_state=3).fit(X, y, Xv, yv)
        assert other.history_.losses == fitted.history_.losses

    def test_attention(self, fitted):
        a = fitted.attention_weights(["we", "saw", "evil.com"])
        assert a.shape == (3,) and a.sum() == pytest.approx(1.0, abs=1e-12)

    def test_save_load(self, fitted, data, tmp_path):
        path = tmp_path / "m.ckpt"
        fitted.save(path)
        loaded = IOCTagger.load(path)
        assert loaded.predict(data[2][0]) == fitted.predict(data[2][0])
        assert loaded.get_params()["hidden"] == TINY["hidden"]

    def test_pretrained_tuple(self, data):
        from iocner.embeddings import pretrain_skipgram
        (X, y), _, _ = data
        emb = pretrain_skipgram(X, dim=6, iterations=1)
        est = IOCTagger(**TINY, embeddings=emb).fit(X, y)
        assert est.network_.token_vocab.items()[:len(emb[0]) - 1] == emb[0].items()


class TestBaselineTagger:
    def test_fit_predict(self, data):
        (X, y), _, (Xt, yt) = data
        est = BaselineTagger().fit(X, y)
        pred = est.predict(["see CVE-2017-0144 now"])
        assert pred == [["O", "B-vulnerability", "O"]]
        assert 0.0 <= est.score(Xt, yt) <= 1.0
        assert clone(est).get_params() == est.get_params()


class TestSpellingFeatures:
    def test_transform(self):
        out = SpellingFeatures().fit(None).transform(["CVE-2017-0144", "hello"])
        assert out.shape == (2, 22) and out[0, 4] == 1 and out[1, :8].sum() == 0
        assert len(SpellingFeatures().fit(None).get_feature_names_out()) == 22

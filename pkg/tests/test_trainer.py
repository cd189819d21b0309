import numpy as np
import pytest

import iocner.trainer as trainer_mod
from iocner.corpus import DEFAULT_SCHEME, is_bio_valid
from iocner.evaluation import SyntheticSpec, make_synthetic_corpus
from iocner.model import Dimensions
from iocner.netcore import ParamStore
from iocner.trainer import (
    CheckpointError,
    CheckpointVersionError,
    NonFiniteLossError,
    TrainConfig,
    build_network,
    clip_gradients,
    load_model,
    save_model,
    train,
)

TINY = dict(token_dim=6, char_dim=4, char_hidden=3, hidden=5, attention=4, ffn_hidden=6)


@pytest.fixture(scope="module")
def corpus():
    return make_synthetic_corpus(SyntheticSpec(n_train=12, n_val=4, n_test=6, seed=11))


def tiny_config(**kw):
    base = dict(TINY, max_epochs=3, patience=3, seed=5)
    base.update(kw)
    return TrainConfig(**base)


class TestClip:
    def store(self, grads):
        s = ParamStore()
        for k, g in enumerate(grads):
            s.add(f"p{k}", np.zeros_like(g))
            s.accumulate(f"p{k}", g)
        return s

    def test_factor_half(self):
        s = self.store([np.array([6.0, 8.0])])
        assert clip_gradients(s, 5.0) == pytest.approx(0.5)
        assert s.grad_norm() == pytest.approx(5.0)

    def test_untouched(self):
        s = self.store([np.array([0.6, 0.8])])
        assert clip_gradients(s, 5.0) == 1.0
        assert s.grad_norm() == pytest.approx(1.0)

    def test_random(self, rng):
        for _ in range(20):
            s = self.store([rng.normal(size=(3, 4)) * 5, rng.normal(size=7) * 5])
            before = s.grad_norm()
            f = clip_gradients(s, 5.0)
            assert 0 < f <= 1.0
            assert s.grad_norm() <= 5.0 + 1e-9
            assert s.grad_norm() <= before + 1e-12

    def test_non_finite(self):
        with pytest.raises(FloatingPointError):
            clip_gradients(self.store([np.array([np.inf])]))


class TestConfig:
    def test_defaults(self):
        c = TrainConfig()
        assert (c.learning_rate, c.clip_norm, c.dropout_p, c.max_epochs, c.patience) == \
            (0.005, 5.0, 0.5, 100, 10)
        assert c.dimensions == Dimensions()

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ValueError):
            TrainConfig(patience=20, max_epochs=10)
        with pytest.raises(ValueError):
            TrainConfig(dropout_p=1.0)

    def test_from_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# experiment\nhidden = 32\nuse_features = false  # ablation\n"
                     "learning_rate=0.01\n")
        c = TrainConfig.from_file(p, hidden=64)
        assert c.hidden == 64 and c.use_features is False and c.learning_rate == 0.01

    @pytest.mark.parametrize("text", ["bogus = 1\n", "hidden 3\n", "use_features = maybe\n"])
    def test_bad_file(self, tmp_path, text):
        p = tmp_path / "run.cfg"
        p.write_text(text)
        with pytest.raises(ValueError):
            TrainConfig.from_file(p)


class TestNetwork:
    def test_decodes_are_valid(self, corpus):
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME)
        for s in corpus[2]:
            assert is_bio_valid(net.tag(s.tokens), DEFAULT_SCHEME)
        assert net.tag([]) == []

    def test_feature_projection_optional(self, corpus):
        net = build_network(corpus[0], tiny_config(use_features=False), DEFAULT_SCHEME)
        assert "feat.W" not in net.store.params
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME)
        assert np.array_equal(net.store["feat.W"], np.eye(22))

    def test_masked_transitions_frozen(self, corpus):
        net, _ = train(corpus[0], corpus[1], tiny_config(max_epochs=1, patience=1))
        T = net.transitions
        assert np.all(T[~net.allowed] == -1e4)

    def test_attention_sums_to_one(self, corpus):
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME)
        a = net.attention_weights(net.encode(corpus[0][0].tokens))
        assert a.sum() == pytest.approx(1.0, abs=1e-12)

    def test_pretrained_rows_used(self, corpus, rng):
        from iocner.embeddings import TokenVocab
        vocab = TokenVocab(["zebra"])
        table = rng.normal(size=(2, 6))
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME, pretrained=(vocab, table))
        assert net.token_vocab.index("zebra") == 1
        assert np.array_equal(net.store["tok_emb"][1], table[1])
        assert len(net.token_vocab) > 2


class TestTrain:
    def test_single_sentence_loss_decreases(self, corpus):
        sent = corpus[0][0]
        net = build_network([sent], tiny_config(dropout_p=0.0), DEFAULT_SCHEME)
        enc = net.encode(sent.tokens)
        before = net.loss(enc, sent.gold_labels)
        train([sent], [sent], tiny_config(dropout_p=0.0, max_epochs=1, patience=1), network=net)
        assert net.loss(enc, sent.gold_labels) < before

    def test_deterministic(self, corpus):
        _, h1 = train(corpus[0], corpus[1], tiny_config())
        _, h2 = train(corpus[0], corpus[1], tiny_config())
        assert h1.losses == h2.losses

    def test_early_stop_restores_best(self, corpus, monkeypatch):
        scores = iter([0.5, 0.3, 0.9])
        monkeypatch.setattr(trainer_mod, "evaluate_f1", lambda *a: next(scores))
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME)
        states = []
        net_, hist = train(corpus[0], corpus[1], tiny_config(patience=1), network=net,
                           callback=lambda rec: states.append(net.store.state_dict()))
        assert len(hist) == 2 and hist.stopped_early
        assert hist.best_epoch == 1
        for k, v in states[0].items():
            assert np.array_equal(net_.store[k], v)

    def test_ties_are_not_improvements(self, corpus, monkeypatch):
        monkeypatch.setattr(trainer_mod, "evaluate_f1", lambda *a: 0.4)
        _, hist = train(corpus[0], corpus[1], tiny_config(max_epochs=5, patience=2))
        assert len(hist) == 3
        assert [r.best for r in hist.epochs] == [True, False, False]

    def test_best_f1_is_max(self, corpus):
        _, hist = train(corpus[0], corpus[1], tiny_config(max_epochs=4, patience=4))
        assert hist.val_f1[hist.best_epoch - 1] == max(hist.val_f1)
        assert len(hist.to_tsv().strip().splitlines()) == len(hist) + 1

    def test_empty(self):
        with pytest.raises(ValueError):
            train([], None, tiny_config())

    def test_non_finite_loss(self, corpus, monkeypatch):
        net = build_network(corpus[0], tiny_config(), DEFAULT_SCHEME)
        monkeypatch.setattr(net, "loss_and_grads", lambda *a, **k: float("nan"))
        with pytest.raises(NonFiniteLossError) as err:
            train(corpus[0], corpus[1], tiny_config(), network=net)
        assert err.value.epoch == 1


@pytest.fixture(scope="module")
def trained(corpus):
    return train(corpus[0], corpus[1], tiny_config(max_epochs=2, patience=2))[0]


class TestCheckpoint:
    def test_round_trip_bitwise(self, trained, corpus, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(trained, path, tiny_config())
        net, config = load_model(path)
        assert config == tiny_config()
        for s in corpus[2]:
            enc_a, enc_b = trained.encode(s.tokens), net.encode(s.tokens)
            assert np.array_equal(trained.forward(enc_a)[0], net.forward(enc_b)[0])
            assert trained.tag(s.tokens) == net.tag(s.tokens)
        assert net.tag(["never-seen-token", "1.2.3.4"]) == trained.tag(["never-seen-token",
                                                                         "1.2.3.4"])

    def test_truncated(self, trained, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(trained, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(CheckpointError):
            load_model(path)

    def test_flipped_byte(self, trained, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(trained, path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError):
            load_model(path)

    def test_version_mismatch(self, trained, tmp_path, monkeypatch):
        path = tmp_path / "m.ckpt"
        monkeypatch.setattr(trainer_mod, "FORMAT_VERSION", 99)
        save_model(trained, path)
        monkeypatch.setattr(trainer_mod, "FORMAT_VERSION", 1)
        with pytest.raises(CheckpointVersionError):
            load_model(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"hello world" * 10)
        with pytest.raises(CheckpointError):
            load_model(path)

import math

import numpy as np
import pytest

import ttlm


def random_cores(rank, vocab, seed=0):
    rng = np.random.default_rng(seed)
    return ttlm.TTCores.untied(
        rng.uniform(-1, 1, (vocab, rank)),
        rng.uniform(-1, 1, (rank, vocab, rank)),
        rng.uniform(-1, 1, (vocab, rank)),
    )


def test_tt_element_worked_example():
    g_first = np.array([[1.0, 0.0], [0.0, 1.0]])
    g_mid = np.zeros((2, 2, 2))
    g_mid[:, 0, :] = np.eye(2)
    g_mid[:, 1, :] = [[0.5, 0.0], [0.0, 2.0]]
    g_out = np.array([[1.0, 1.0], [1.0, 1.0]])
    cores = ttlm.TTCores.untied(g_first, g_mid, g_out)
    assert ttlm.tt_element(cores, [0, 1, 0]) == 0.5


def test_scores_agree():
    cores = random_cores(3, 4)
    for seq in ([1, 2], [3, 0, 2], [3, 0, 2, 1]):
        dense = ttlm.score_bruteforce(cores, seq)
        assert ttlm.score_recursive(cores, seq) == pytest.approx(dense, rel=1e-12, abs=1e-12)
        assert ttlm.tt_element(cores, seq) == pytest.approx(dense, rel=1e-12, abs=1e-12)


def test_conditionals_are_distributions():
    cores = random_cores(2, 3, seed=4)
    a = ttlm.conditional_bruteforce(cores, [1, 2])
    b = ttlm.conditional_recursive(cores, [1, 2])
    assert a.shape == (3,)
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert a.sum() == pytest.approx(1.0, abs=1e-12)


def test_materialize_cap():
    cores = random_cores(2, 4)
    assert ttlm.materialize_A(cores, 3).shape == (4, 4, 4)
    with pytest.raises(ttlm.CapExceededError):
        ttlm.materialize_A(cores, 3, entry_cap=10)


def test_short_sequences_rejected():
    with pytest.raises(ttlm.ShapeError):
        ttlm.score_bruteforce(random_cores(2, 3), [0])


def test_shape_errors_surface():
    with pytest.raises(ttlm.ShapeError):
        ttlm.TTCores.untied(np.zeros((3, 2)), np.zeros((2, 3, 3)), np.zeros((3, 2)))
    with pytest.raises(ttlm.Error):
        ttlm.tt_element(random_cores(2, 3), [5])


@pytest.mark.parametrize("kind", ttlm.CELL_KINDS)
def test_models_score_and_predict(kind):
    embed = 0 if kind.startswith("ttlm") else 6
    model = ttlm.LanguageModel(kind, vocab=7, hidden=3, embed=embed, seed=3)
    total, per_step = model.sequence_nll([1, 2, 3, 4])
    assert len(per_step) == 4
    assert total == pytest.approx(sum(per_step), rel=1e-12)
    p = model.predict([1, 2])
    assert p.shape == (7,)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert model.parameter_count == sum(t.size for t in model.parameters().values())


def test_gradients_match_parameters():
    model = ttlm.LanguageModel("ttlm-large", vocab=5, hidden=2, seed=9)
    grads = model.gradients([0, 3, 1])
    params = model.parameters()
    assert grads.keys() == params.keys()
    for name in params:
        assert grads[name].shape == params[name].shape


def test_set_parameter_zero_head_is_uniform():
    model = ttlm.LanguageModel("ttlm-tiny", vocab=4, hidden=2)
    model.set_parameter("head_p", np.zeros((4, 2)))
    total, _ = model.sequence_nll([0, 1, 2])
    assert total == pytest.approx(3 * math.log(4), rel=1e-12)
    with pytest.raises(ttlm.ShapeError):
        model.set_parameter("head_p", np.zeros((2, 2)))
    with pytest.raises(KeyError):
        model.set_parameter("nope", np.zeros(1))


def test_checkpoint_round_trip(tmp_path):
    model = ttlm.LanguageModel("mi-rnn", vocab=6, hidden=3, embed=4, tie_weights=False, seed=5)
    path = tmp_path / "m.ckpt"
    model.save(path, metadata="note=1\n", vocab=["<unk>", "<eos>", "a"])
    loaded, metadata, vocab = ttlm.load_checkpoint(path)
    assert metadata == "note=1\n"
    assert vocab == ["<unk>", "<eos>", "a"]
    assert loaded.kind == "mi-rnn"
    assert loaded.sequence_nll([1, 2, 3])[0] == model.sequence_nll([1, 2, 3])[0]
    with pytest.raises(ttlm.CheckpointError):
        ttlm.load_checkpoint(tmp_path / "missing.ckpt")


def test_vocab_and_encoding():
    vocab = ttlm.build_vocab("a a b\n")
    assert vocab.tokens == ["<unk>", "<eos>", "a", "b"]
    ids = ttlm.encode("a q b\n", vocab)
    assert ids == [2, 0, 3, 1]
    assert ttlm.decode(ids, vocab) == ["a", "<unk>", "b", "<eos>"]
    with pytest.raises(ttlm.DataError):
        ttlm.build_vocab("")


def test_training_and_evaluation():
    text = ttlm.zipf_corpus(2000, vocab_size=20)
    vocab = ttlm.build_vocab(text)
    ids = ttlm.encode(text, vocab)
    model = ttlm.LanguageModel("vanilla-rnn", vocab=len(vocab), hidden=8, embed=8)
    report = ttlm.train(model, ids[:1600], ids[1600:1800], ids[1800:], epochs=2, batch_size=4, bptt_len=10)
    assert len(report["epochs"]) == 2
    assert report["best_epoch"] in (1, 2)
    assert math.isfinite(report["test_ppl"])
    assert ttlm.evaluate_ppl(model, ids[1800:]) > 1.0


def test_uniform_model_perplexity():
    model = ttlm.LanguageModel("ttlm-tiny", vocab=4, hidden=2)
    model.set_parameter("head_p", np.zeros((4, 2)))
    assert ttlm.evaluate_ppl(model, [0, 1, 2, 3] * 20, batch_size=2, bptt_len=5) == pytest.approx(4.0, rel=1e-12)


def test_run_checks():
    results = ttlm.run_checks()
    assert len(results) == 6
    assert all(r["passed"] for r in results)
    with pytest.raises(ttlm.ConfigError):
        ttlm.run_checks(scale="huge")

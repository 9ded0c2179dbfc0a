import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmint.models import AuditedModel, AuditedModelSpec, build_model
from gmint.probe import (
    LayerSelector,
    build_mint_dataset,
    embedding_feature,
    extract,
    per_sample_gradient,
    read_features,
    write_features,
)
from gmint.text import Sample, Vocabulary, build_vocab


def logreg_with_zero_weights():
    # vocabulary: <pad>, <unk>, a, b
    vocab = Vocabulary({"<pad>": 0, "<unk>": 1, "a": 2, "b": 3}, 4)
    spec = AuditedModelSpec(kind="logreg", vocab_size=4, max_len=4, num_classes=2)
    m = build_model(spec, vocab)
    zeros = {n: np.zeros_like(m.params[n]) for n in m.params.names()}
    return AuditedModel(spec, m.params.replace(zeros), vocab)


def small_mlp(n=40, seed=0):
    samples = [Sample(f"s{i:03d}", " ".join(f"t{(i * 7 + j) % 23}" for j in range(5)), i % 2) for i in range(n)]
    vocab = build_vocab(samples, 30)
    spec = AuditedModelSpec(kind="mlp", vocab_size=30, max_len=6, embed_dim=4, hidden_dim=5, seed=seed)
    return build_model(spec, vocab), samples


def test_selector_parsing():
    assert LayerSelector.parse("first:2") == LayerSelector("first_k", 2)
    assert str(LayerSelector.parse("last:3")) == "last:3"
    assert LayerSelector.parse("names:a,b").names == ("a", "b")
    for bad in ("first:0", "first:x", "middle:2", "names:"):
        with pytest.raises(ValueError):
            LayerSelector.parse(bad)


def test_selector_resolution_counts_tensors():
    m, _ = small_mlp()
    p = m.params
    assert LayerSelector.parse("first:2").resolve(p) == ["layer00.embedding", "layer01.dense.weight"]
    assert LayerSelector.parse("last:3").resolve(p) == [
        "layer01.dense.bias", "layer02.output.weight", "layer02.output.bias"]
    # named selection follows model order, not the order given
    assert LayerSelector.parse("names:layer02.output.bias,layer00.embedding").resolve(p) == [
        "layer00.embedding", "layer02.output.bias"]
    with pytest.raises(KeyError):
        LayerSelector.parse("names:nope").resolve(p)
    with pytest.raises(KeyError):
        LayerSelector.parse("first:9").resolve(p)


def test_logreg_analytic_gradient():
    m = logreg_with_zero_weights()
    f = per_sample_gradient(m, Sample("x", "a b b", 1), LayerSelector.parse("first:2")).feature
    w = f[:8].reshape(4, 2)
    # bag of words over (pad, unk, a, b) = [0, 0, 1, 2]; (p - y) = [0.5, -0.5]
    assert np.allclose(w[:, 1], -0.5 * np.array([0, 0, 1, 2]), atol=1e-12)
    assert np.allclose(w[:, 0], 0.5 * np.array([0, 0, 1, 2]), atol=1e-12)
    assert np.allclose(f[8:], [0.5, -0.5], atol=1e-12)


def test_logreg_matches_closed_form():
    rng = np.random.default_rng(0)
    vocab = Vocabulary({"<pad>": 0, "<unk>": 1, **{f"w{i}": i + 2 for i in range(6)}}, 8)
    spec = AuditedModelSpec(kind="logreg", vocab_size=8, max_len=5, num_classes=3)
    m = build_model(spec, vocab)
    m = AuditedModel(spec, m.params.replace({"layer00.dense.weight": rng.normal(size=(8, 3)), "layer00.dense.bias": rng.normal(size=3)}), vocab)
    sample = Sample("x", "w0 w3 w3 w5 zz", 2)
    x = np.zeros(8)
    for t in m.encode([sample])[0]:
        x[t] += t != 0
    z = x @ m.params["layer00.dense.weight"] + m.params["layer00.dense.bias"]
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    d = p - np.eye(3)[2]
    expect = np.concatenate([np.outer(x, d).reshape(-1), d])
    got = per_sample_gradient(m, sample, LayerSelector.parse("first:2")).feature
    assert np.max(np.abs(got - expect)) < 1e-10


def test_feature_lengths():
    vocab = build_vocab(["a b c"], 10)
    spec = AuditedModelSpec(kind="logreg", vocab_size=10, max_len=4, num_classes=3)
    m = build_model(spec, vocab)
    s = Sample("x", "a c", 0)
    assert per_sample_gradient(m, s, LayerSelector()).feature.shape == (10 * 3 + 3,)
    assert embedding_feature(m, s).feature.shape == (3,)
    mlp, samples = small_mlp()
    assert embedding_feature(mlp, samples[0]).feature.shape == (5,)
    assert per_sample_gradient(mlp, samples[0], LayerSelector.parse("last:3")).feature.shape == (5 + 5 * 2 + 2,)


def test_probing_is_pure_and_repeatable():
    m, samples = small_mlp()
    before = m.params.fingerprint()
    sel = LayerSelector.parse("first:2")
    a = per_sample_gradient(m, samples[3], sel).feature
    b = per_sample_gradient(m, samples[3], sel).feature
    assert np.array_equal(a, b) and m.params.fingerprint() == before
    twin = Sample("other", samples[3].text, samples[3].label)
    assert np.array_equal(embedding_feature(m, twin).feature, embedding_feature(m, samples[3]).feature)


@settings(max_examples=10, deadline=None)
@given(st.permutations(list(range(12))))
def test_features_are_order_independent(order):
    m, samples = small_mlp(12)
    sel = LayerSelector.parse("last:3")
    ref = extract(m, samples, "gradient", sel)
    got = extract(m, [samples[i] for i in order], "gradient", sel)
    assert np.array_equal(got, ref[list(order)])


def test_mint_dataset_counts_and_normalization():
    m, samples = small_mlp(1500)
    d, e = samples[:750], samples[750:]
    ds = build_mint_dataset(m, d, e, LayerSelector.parse("last:3"), seed=3)
    assert len(ds) == 1500 and ds.counts == {"member": 750, "external": 750}
    assert len(ds.train_idx) == int(np.floor(0.65 * 1500))
    x, _ = ds.train_view()
    assert np.max(np.abs(x.mean(axis=0))) < 1e-9
    raw_std = ds.features[ds.train_idx].std(axis=0)
    assert np.allclose(x.std(axis=0)[raw_std > 1e-12], 1.0)
    assert np.all(np.isfinite(ds.test_view()[0]))
    assert ds.sample_ids == build_mint_dataset(m, d, e, LayerSelector.parse("last:3"), seed=3).sample_ids


def test_zero_variance_columns_pass_through():
    m, samples = small_mlp(20)
    # embedding rows of tokens absent from these samples have zero gradient everywhere
    ds = build_mint_dataset(m, samples[:10], samples[10:], LayerSelector.parse("first:1"))
    assert np.any(ds.std == 1.0)
    assert np.all(np.isfinite(ds.train_view()[0]))


def test_overlap_and_membership_guards():
    m, samples = small_mlp(10)
    sel = LayerSelector()
    with pytest.raises(ValueError, match="overlap"):
        build_mint_dataset(m, samples[:5], samples[4:], sel)
    with pytest.raises(ValueError, match="non-empty"):
        build_mint_dataset(m, [], samples, sel)
    with pytest.raises(ValueError, match="not in the audited model's training set"):
        build_mint_dataset(m, samples[:5], samples[5:], sel, member_ids=[s.id for s in samples[:4]])
    with pytest.raises(ValueError, match="were in the audited"):
        build_mint_dataset(m, samples[:5], samples[5:], sel, member_ids=[s.id for s in samples[:6]])


def test_feature_file_round_trip(tmp_path):
    m, samples = small_mlp(30)
    ds = build_mint_dataset(m, samples[:15], samples[15:], LayerSelector.parse("last:3"), seed=1)
    path = write_features(tmp_path / "f.gmnt", ds)
    raw = path.read_bytes()
    assert raw[:4] == b"GMNT"
    ff = read_features(path)
    assert ff.sample_ids == ds.sample_ids and ff.selector == ds.selector
    assert ff.model_fingerprint == m.params.fingerprint()
    assert np.array_equal(ff.labels, ds.labels)
    assert np.array_equal(ff.features, ds.features.astype(np.float32).astype(np.float64))
    assert write_features(tmp_path / "g.gmnt", ds).read_bytes() == raw
    with pytest.raises(ValueError, match="magic"):
        (tmp_path / "bad.gmnt").write_bytes(b"XXXX" + raw[4:])
        read_features(tmp_path / "bad.gmnt")

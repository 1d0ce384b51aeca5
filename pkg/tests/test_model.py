import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from hiergen.checkpoint import (
    CheckpointError,
    FingerprintMismatch,
    load_checkpoint,
    save_checkpoint,
)
from hiergen.corpus import (
    Document,
    GeneratorConfig,
    Proposal,
    build_vocabulary,
    encode_proposal,
    generate_synthetic,
    save_corpus,
)
from hiergen.model import ModelConfig, ProposalClassifier
from hiergen.training import TrainConfig, train
from oracles import decoder_block_oracle, encoder_block_oracle, softmax_oracle

TINY_GEN = GeneratorConfig(
    branching=(2, 2),
    vocab_size=60,
    doc_lengths={"title": 4, "abstract": 6},
    n_train=30,
    n_valid=5,
    n_test=5,
)

TINY_MODEL = ModelConfig(
    hidden_dim=8,
    encoder_layers=1,
    decoder_layers=1,
    num_heads=2,
    max_seq_len=8,
    dropout_p=0.0,
)


@pytest.fixture(scope="module")
def tiny():
    taxonomy, train_set, valid_set, test_set = generate_synthetic(TINY_GEN, seed=13)
    vocab = build_vocabulary(train_set)
    model = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    return taxonomy, vocab, model, train_set, test_set


def zero_heads(model, bias_by_level=None):
    """Level heads become input-independent: logits == b2 per level."""
    for k, head in enumerate(model.heads, start=1):
        head.w1.data[:] = 0.0
        head.b1.data[:] = 0.0
        head.w2.data[:] = 0.0
        head.b2.data[:] = 0.0
        if bias_by_level and k in bias_by_level:
            head.b2.data[:] = bias_by_level[k]


# -- encoder -----------------------------------------------------------------


def test_encode_single_document_shape(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    p = Proposal([train_set[0].documents[0]])
    assert model.encode(p).shape == (1, TINY_MODEL.hidden_dim)


def test_encode_document_order_permutes_views(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    p = train_set[0]
    swapped = Proposal(list(reversed(p.documents)), p.gold_path, p.pid)
    a = model.encode(p).data
    b = model.encode(swapped).data
    assert np.max(np.abs(a[::-1] - b)) < 1e-12


def test_encode_matches_composed_block_oracle():
    taxonomy, train_set, _, _ = generate_synthetic(TINY_GEN, seed=21)
    vocab = build_vocabulary(train_set)
    config = ModelConfig(
        hidden_dim=4, encoder_layers=1, decoder_layers=1, num_heads=1,
        max_seq_len=8, dropout_p=0.0,
    )
    model = ProposalClassifier(config, vocab, taxonomy, seed=9)
    p = train_set[0]

    rows = []
    for enc in encode_proposal(p, vocab, config.max_seq_len):
        x = model.word_emb.data[enc.ids] + model.word_pos.table.data[: len(enc.ids)]
        mask = np.zeros((len(enc.ids), len(enc.ids)), dtype=bool)
        mask[:, : enc.n_real] = True
        x = encoder_block_oracle(x, model.word_encoder[0], mask)
        rows.append(x[0])
    views = encoder_block_oracle(np.stack(rows), model.doc_encoder[0])
    got = model.encode(p).data
    assert np.max(np.abs(got - views)) < 1e-10


def test_encode_rejects_empty(tiny):
    taxonomy, vocab, model, _, _ = tiny
    bare = Proposal.__new__(Proposal)
    bare.documents = []
    bare.gold_path = None
    bare.pid = None
    with pytest.raises(ValueError, match="document"):
        model.encode(bare)


# -- decode_step ---------------------------------------------------------------


def test_decode_step_is_a_distribution(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    views = model.encode(train_set[0])
    for k, ancestors in ((1, []), (2, [taxonomy.level_nodes(1)[0].id])):
        dist = model.decode_step(views, ancestors)
        assert len(dist) == taxonomy.level_size(k) + 1
        assert abs(dist.sum() - 1.0) < 1e-9
        assert np.all(dist >= 0)


def test_decode_step_zero_head_is_uniform(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    model = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    zero_heads(model)
    views = model.encode(train_set[0])
    dist = model.decode_step(views, [])
    n = taxonomy.level_size(1) + 1
    assert np.allclose(dist, 1.0 / n, atol=1e-12)


def test_decode_step_matches_composed_oracle():
    taxonomy, train_set, _, _ = generate_synthetic(TINY_GEN, seed=21)
    vocab = build_vocabulary(train_set)
    config = ModelConfig(
        hidden_dim=4, encoder_layers=1, decoder_layers=1, num_heads=1,
        max_seq_len=8, dropout_p=0.0,
    )
    model = ProposalClassifier(config, vocab, taxonomy, seed=9)
    p = train_set[0]
    views = model.encode(p)
    ancestor = taxonomy.level_nodes(1)[1].id

    ids = np.array([taxonomy.root.id, ancestor])
    s = model.label_emb.data[ids] + model.dec_pos.table.data[:2]
    mask = np.tril(np.ones((2, 2), dtype=bool))
    s = decoder_block_oracle(s, views.data, model.decoder[0], mask)
    head = model.heads[1]
    logits = np.maximum(s[-1] @ head.w1.data + head.b1.data, 0) @ head.w2.data + head.b2.data
    want = softmax_oracle(logits)
    got = model.decode_step(views, [ancestor])
    assert np.max(np.abs(got - want)) < 1e-10


def test_decode_step_beyond_max_depth(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    views = model.encode(train_set[0])
    full = [taxonomy.level_nodes(1)[0].id, taxonomy.level_nodes(2)[0].id]
    with pytest.raises(ValueError, match="depth"):
        model.decode_step(views, full)


# -- predict -------------------------------------------------------------------


def test_predict_full_prefix_returns_immediately(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    gold = [p for p in train_set if len(p.gold_path) == 2][0]
    pred = model.predict(gold, expert_prefix=list(gold.gold_path.labels))
    assert pred.path.labels == gold.gold_path.labels
    assert pred.score == 1.0
    assert pred.steps == []


def test_predict_immediate_stop(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    forced = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    stop_bias = np.zeros(taxonomy.level_size(1) + 1)
    stop_bias[-1] = 30.0
    zero_heads(forced, {1: stop_bias})
    pred = forced.predict(train_set[0])
    assert pred.path.labels == ()
    assert pred.path.terminated


def test_predict_expert_prefix_is_respected(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    first = taxonomy.level_nodes(1)[1].id
    pred = model.predict(train_set[0], expert_prefix=[first])
    assert pred.path.labels[0] == first


def test_predict_invalid_prefix_fails_before_decoding(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    level2 = taxonomy.level_nodes(2)[0].id
    with pytest.raises(ValueError, match="prefix"):
        model.predict(train_set[0], expert_prefix=[level2])


def test_predict_unknown_mode(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    with pytest.raises(ValueError, match="mode"):
        model.predict(train_set[0], mode="beam")


def test_constrained_predictions_always_validate():
    config = GeneratorConfig(
        branching=(3, 3),
        vocab_size=100,
        doc_lengths={"title": 4, "abstract": 6},
        n_train=1000,
        n_valid=0,
        n_test=0,
    )
    taxonomy, proposals, _, _ = generate_synthetic(config, seed=17)
    vocab = build_vocabulary(proposals)
    model = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=23)
    for p in proposals:
        pred = model.predict(p, mode="constrained")
        assert taxonomy.validate_path(pred.path)


def test_predict_argmax_invariant_to_head_temperature(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    base = [model.predict(p).path.labels for p in train_set[:8]]
    scaled = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    for head, ref in zip(scaled.heads, model.heads):
        head.w1.data[:] = ref.w1.data
        head.b1.data[:] = ref.b1.data
        head.w2.data[:] = 3.0 * ref.w2.data
        head.b2.data[:] = 3.0 * ref.b2.data
    for p, want in zip(train_set[:8], base):
        assert scaled.predict(p).path.labels == want


def test_predict_alternatives_are_sorted_and_scored(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    pred = model.predict(train_set[0], top_k=3)
    score = 1.0
    for step in pred.steps:
        probs = [q for _, q in step.alternatives]
        assert probs == sorted(probs, reverse=True)
        assert len(step.alternatives) == 3
        assert step.alternatives[0][0] == step.code
        score *= step.prob
    assert math.isclose(score, pred.score, rel_tol=1e-12)


# -- loss ------------------------------------------------------------------------


def test_loss_uniform_head_is_log_cardinality(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    uniform = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    zero_heads(uniform)
    short = [p for p in train_set if len(p.gold_path) == 1][0]
    # one remaining level: the stop decision at level 2 over |C_2|+1 slots
    loss = uniform.loss([short], start_level=2)
    assert abs(loss.item() - math.log(taxonomy.level_size(2) + 1)) < 1e-12
    # both levels: level-1 label + level-2 stop
    loss = uniform.loss([short])
    want = math.log(taxonomy.level_size(1) + 1) + math.log(taxonomy.level_size(2) + 1)
    assert abs(loss.item() - want) < 1e-12


def test_loss_perfect_model_is_zero(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    short = [p for p in train_set if len(p.gold_path) == 1][0]
    gold_idx = taxonomy.index_in_level(short.gold_path.labels[0])
    b1 = np.zeros(taxonomy.level_size(1) + 1)
    b1[gold_idx] = 200.0
    b2 = np.zeros(taxonomy.level_size(2) + 1)
    b2[-1] = 200.0  # stop
    perfect = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    zero_heads(perfect, {1: b1, 2: b2})
    assert perfect.loss([short]).item() < 1e-12


def test_loss_matches_hand_computed_nll(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    rng = np.random.default_rng(3)
    bias = {
        1: rng.normal(size=taxonomy.level_size(1) + 1),
        2: rng.normal(size=taxonomy.level_size(2) + 1),
    }
    crafted = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=5)
    zero_heads(crafted, bias)
    full = [p for p in train_set if len(p.gold_path) == 2][0]
    short = [p for p in train_set if len(p.gold_path) == 1][0]

    def nll(p):
        total = 0.0
        depth = len(p.gold_path)
        last = depth if depth == taxonomy.max_depth else depth + 1
        for k in range(1, last + 1):
            probs = softmax_oracle(bias[k])
            idx = (
                taxonomy.index_in_level(p.gold_path.labels[k - 1])
                if k <= depth
                else taxonomy.level_size(k)
            )
            total -= math.log(probs[idx])
        return total

    want = (nll(full) + nll(short)) / 2
    got = crafted.loss([full, short]).item()
    assert abs(got - want) < 1e-10


def test_loss_rejects_unlabelled_and_empty(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    with pytest.raises(ValueError, match="empty"):
        model.loss([])
    bare = Proposal([Document("title", ["w01"])])
    with pytest.raises(ValueError, match="gold"):
        model.loss([bare])


def test_gradient_flow_touches_only_supervised_heads():
    config = GeneratorConfig(
        branching=(2, 2, 2),
        vocab_size=80,
        doc_lengths={"title": 4, "abstract": 6},
        n_train=50,
        n_valid=0,
        n_test=0,
    )
    taxonomy, train_set, _, _ = generate_synthetic(config, seed=29)
    vocab = build_vocabulary(train_set)
    model = ProposalClassifier(TINY_MODEL, vocab, taxonomy, seed=31)
    depth_one = [p for p in train_set if len(p.gold_path) == 1][0]
    loss = model.loss([depth_one])  # supervises levels 1 and 2 only
    loss.backward()
    for name, p in model.parameters().items():
        if name.startswith("head.3."):
            assert p.grad is None or not np.any(p.grad), name
        elif name.startswith(("head.1.", "head.2.")) and name.endswith(("w2", "b2")):
            assert p.grad is not None and np.any(p.grad), name
    for core in ("word_emb", "label_emb", "word_enc.0.attn.wq", "dec.0.src_attn.wq"):
        g = model.parameters()[core].grad
        assert g is not None and np.any(g), core


# -- teacher forcing equivalence ---------------------------------------------


def test_batched_causal_pass_equals_per_step_recomputation(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    for p in train_set[:10]:
        views = model.encode(p)
        gold = list(p.gold_path.labels)
        states = model._decoder_pass(gold, views)
        for k in range(1, len(gold) + 1):
            import hiergen.autodiff as ad

            full_row = ad.narrow(states, 0, k - 1, 1)
            full_logits = model.level_logits(full_row, k).data
            step_states = model._decoder_pass(gold[: k - 1], views)
            step_row = ad.narrow(step_states, 0, k - 1, 1)
            step_logits = model.level_logits(step_row, k).data
            assert np.max(np.abs(full_logits - step_logits)) < 1e-6


# -- training -------------------------------------------------------------------


def test_training_reduces_loss_and_is_deterministic(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    tc = TrainConfig(
        learning_rate=1e-3, batch_size=10, weight_decay=0.0, warmup_steps=20,
        epochs=6, seed=11,
    )
    m1, h1 = train(train_set, TINY_MODEL, tc, taxonomy)
    m2, h2 = train(train_set, TINY_MODEL, tc, taxonomy)
    assert h1[-1]["train_loss"] < h1[0]["train_loss"]
    assert [r["train_loss"] for r in h1] == [r["train_loss"] for r in h2]
    for (n1, p1), (n2, p2) in zip(m1.parameters().items(), m2.parameters().items()):
        assert n1 == n2
        assert np.array_equal(p1.data, p2.data)


def test_training_returns_best_validation_model(tiny):
    taxonomy, vocab, model, train_set, test_set = tiny
    tc = TrainConfig(
        learning_rate=3e-3, batch_size=10, weight_decay=0.0, warmup_steps=5,
        epochs=4, seed=7,
    )
    trained, history = train(train_set, TINY_MODEL, tc, taxonomy, valid_set=list(test_set))
    best = min(rec["valid_loss"] for rec in history)
    assert trained.loss(list(test_set)).item() == best


def test_training_with_zero_lr_freezes_parameters(tiny):
    taxonomy, vocab, model, train_set, _ = tiny
    tc = TrainConfig(learning_rate=0.0, batch_size=10, weight_decay=0.0, epochs=1, seed=2)
    trained, _ = train(train_set, TINY_MODEL, tc, taxonomy)
    fresh = ProposalClassifier(TINY_MODEL, trained.vocab, taxonomy, seed=2)
    for (name, a), (_, b) in zip(trained.parameters().items(), fresh.parameters().items()):
        assert np.array_equal(a.data, b.data), name


# -- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip_preserves_predictions(tiny, tmp_path):
    taxonomy, vocab, model, train_set, test_set = tiny
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    restored = load_checkpoint(path, taxonomy)
    for p in test_set:
        a = model.predict(p)
        b = restored.predict(p)
        assert a.path == b.path
        assert a.score == b.score
        for sa, sb in zip(a.steps, b.steps):
            assert np.array_equal(sa.distribution, sb.distribution)
    assert restored.fingerprint() == model.fingerprint()


def test_checkpoint_truncated_file(tiny, tmp_path):
    taxonomy, vocab, model, _, _ = tiny
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path, taxonomy)
    (tmp_path / "junk.ckpt").write_bytes(b"oops")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "junk.ckpt", taxonomy)


def test_checkpoint_refuses_wrong_taxonomy(tiny, tmp_path):
    taxonomy, vocab, model, _, _ = tiny
    other_tax, other_train, _, _ = generate_synthetic(
        GeneratorConfig(
            branching=(3, 2), vocab_size=80,
            doc_lengths={"title": 4, "abstract": 6}, n_train=10, n_valid=0, n_test=0,
        ),
        seed=3,
    )
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    with pytest.raises(FingerprintMismatch) as e:
        load_checkpoint(path, other_tax)
    assert e.value.expected == taxonomy.fingerprint()
    assert e.value.actual == other_tax.fingerprint()


def test_checkpoint_cross_process_loss_is_bit_identical(tiny, tmp_path):
    taxonomy, vocab, model, train_set, _ = tiny
    ckpt = tmp_path / "model.ckpt"
    tax_file = tmp_path / "tax.json"
    corpus_file = tmp_path / "batch.jsonl"
    save_checkpoint(model, ckpt)
    taxonomy.save(tax_file)
    save_corpus(train_set[:4], taxonomy, corpus_file)
    here = model.loss(train_set[:4]).item().hex()
    script = textwrap.dedent(
        f"""
        from hiergen.checkpoint import load_checkpoint
        from hiergen.corpus import load_corpus
        from hiergen.taxonomy import load_taxonomy
        tax = load_taxonomy({str(tax_file)!r})
        model = load_checkpoint({str(ckpt)!r}, tax)
        batch = load_corpus({str(corpus_file)!r}, tax)
        print(model.loss(batch).item().hex())
        """
    )
    out = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == here

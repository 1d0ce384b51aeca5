"""Expert-in-the-loop decoding: fix the leading labels of a path and see
how the rest of the prediction re-decodes, exactly what the steering UI
does through the HTTP service.
"""

from hiergen.corpus import GeneratorConfig, generate_synthetic
from hiergen.model import ModelConfig
from hiergen.training import TrainConfig, train

gen = GeneratorConfig(n_train=400, n_valid=0, n_test=40)
taxonomy, train_set, _, test_set = generate_synthetic(gen, seed=2)
model, _ = train(
    train_set,
    ModelConfig(hidden_dim=32, encoder_layers=1, decoder_layers=1, num_heads=4,
                max_seq_len=16, dropout_p=0.1),
    TrainConfig(learning_rate=1e-3, batch_size=32, warmup_steps=50, epochs=6, seed=2),
    taxonomy,
)

p = test_set[0]
print("gold:", taxonomy.codes(p.gold_path))

free = model.predict(p, top_k=3)
print("no expert knowledge ->", taxonomy.codes(free.path), f"score {free.score:.3f}")

# lock level 1 to each of its alternatives and watch the remainder re-decode
for code, prob in free.steps[0].alternatives:
    if code == "<stop>":
        continue
    locked = model.predict(p, expert_prefix=[taxonomy.by_code(code).id])
    print(
        f"lock level 1 = {code} (was {prob:.2f}) ->",
        taxonomy.codes(locked.path),
        f"valid={taxonomy.validate_path(locked.path)}",
    )

# constrained decoding guarantees a reasonable path even on a weak model
constrained = model.predict(p, mode="constrained")
print("constrained ->", taxonomy.codes(constrained.path),
      f"valid={taxonomy.validate_path(constrained.path)}")

"""Train a small model end to end and run the full evaluation protocol:
level-wise and overall F1, path-length categories, reasonable-path rate,
and the expert-knowledge sweep.

Takes a couple of minutes; shrink the generator sizes to go faster.
"""

import time

from hiergen.corpus import GeneratorConfig, generate_synthetic
from hiergen.evaluation import evaluate
from hiergen.model import ModelConfig
from hiergen.training import TrainConfig, train

# the documented desk-scale recipe, shrunk to 600 proposals for a demo
gen = GeneratorConfig(n_train=600, n_valid=80, n_test=80)
model_config = ModelConfig(
    hidden_dim=32, encoder_layers=2, decoder_layers=1, num_heads=4,
    max_seq_len=16, dropout_p=0.2,
)
train_config = TrainConfig(
    learning_rate=1e-3, batch_size=32, weight_decay=1e-5, warmup_steps=100,
    epochs=10, seed=0,
)

taxonomy, train_set, valid_set, test_set = generate_synthetic(gen, seed=0)
print(f"taxonomy {[taxonomy.level_size(k) for k in (1, 2, 3)]}, "
      f"{len(train_set)} train / {len(test_set)} test")

started = time.perf_counter()
model, history = train(train_set, model_config, train_config, taxonomy, valid_set=valid_set)
print(f"trained in {time.perf_counter() - started:.0f}s")
for rec in history:
    print(
        f"  epoch {rec['epoch']:2d}: loss {rec['train_loss']:.3f} "
        f"valid {rec['valid_loss']:.3f} level-acc {rec['level_acc']}"
    )

report = evaluate(model, test_set, expert_prefix_lengths=[0, 1, 2])
print()
print(report.to_text())

pred = model.predict(test_set[0], top_k=3)
print("sample prediction:", taxonomy.codes(pred.path),
      "gold:", taxonomy.codes(test_set[0].gold_path))
for step in pred.steps:
    alts = ", ".join(f"{c}:{q:.2f}" for c, q in step.alternatives)
    print(f"  level {step.level}: chose {step.code} ({step.prob:.2f}); alternatives {alts}")

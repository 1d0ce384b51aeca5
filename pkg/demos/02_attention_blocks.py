"""Poke at the transformer pieces: attention weights, masking, and the
post-norm residual blocks.
"""

import numpy as np

from hiergen import autodiff as ad
from hiergen.blocks import BlockConfig, DecoderBlock, EncoderBlock, MultiHeadAttention, causal_mask

rng = np.random.default_rng(1)
cfg = BlockConfig(hidden_dim=8, num_heads=2, dropout_p=0.0)

mha = MultiHeadAttention(cfg, rng)
x = ad.constant(rng.normal(size=(5, 8)))
out, weights = mha.forward(x, x, x, return_weights=True)
print("attention output shape:", out.shape)
for i, w in enumerate(weights):
    print(f"head {i} weight rows sum to:", np.round(w.data.sum(axis=-1), 12))

# a causal mask zeroes out the upper triangle
_, weights = mha.forward(x, x, x, mask=causal_mask(5), return_weights=True)
print("causal head-0 weights:\n", np.round(weights[0].data, 3))

enc = EncoderBlock(cfg, rng)
y = enc.forward(x)
print("encoder block preserves shape:", x.shape, "->", y.shape)

# permutation equivariance: shuffle rows in, rows shuffle out
perm = rng.permutation(5)
y_perm = enc.forward(ad.constant(x.data[perm]))
print("equivariance max diff:", np.max(np.abs(y.data[perm] - y_perm.data)))

dec = DecoderBlock(cfg, rng)
labels = ad.constant(rng.normal(size=(3, 8)))
views = ad.constant(rng.normal(size=(4, 8)))
z = dec.forward(labels, views, self_mask=causal_mask(3))
print("decoder block: label stream", labels.shape, "x views", views.shape, "->", z.shape)

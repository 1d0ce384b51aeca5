"""Walk through the autodiff engine: build a tiny computation, inspect
gradients, and confirm them against central finite differences.
"""

import numpy as np

from hiergen import autodiff as ad

rng = np.random.default_rng(0)

# A two-layer ReLU network squashed into a scalar loss.
x = ad.constant(rng.normal(size=(4, 3)))
w1 = ad.parameter(rng.normal(size=(3, 8)) * 0.3)
w2 = ad.parameter(rng.normal(size=(8, 2)) * 0.3)
target = ad.constant(rng.normal(size=(4, 2)))

hidden = ad.relu(ad.matmul(x, w1))
out = ad.matmul(hidden, w2)
err = out - target
loss = ad.tsum(ad.mul(err, err)) * (1.0 / 8)
loss.backward()

print(f"loss = {loss.item():.6f}")
print(f"w1 gradient norm = {np.linalg.norm(w1.grad):.6f}")

# Finite-difference spot check on one entry of w1.
eps = 1e-5
i, j = 1, 4


def forward():
    h = np.maximum(x.data @ w1.data, 0.0)
    e = h @ w2.data - target.data
    return float((e * e).sum() / 8)


orig = w1.data[i, j]
w1.data[i, j] = orig + eps
hi = forward()
w1.data[i, j] = orig - eps
lo = forward()
w1.data[i, j] = orig
numeric = (hi - lo) / (2 * eps)
print(f"dL/dw1[{i},{j}]: analytic {w1.grad[i, j]:.8f}, numeric {numeric:.8f}")

# Adam with warmup: watch the effective learning rate ramp.
opt = ad.Adam({"w1": w1, "w2": w2}, lr=1e-2, warmup_steps=5)
for step in range(8):
    loss = ad.tsum(ad.mul(w1, w1)) + ad.tsum(ad.mul(w2, w2))
    opt.zero_grad()
    loss.backward()
    opt.step()
    print(
        f"step {opt.step_count}: effective lr {opt.effective_lr():.4f}, "
        f"loss {loss.item():.4f}"
    )

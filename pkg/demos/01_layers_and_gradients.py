"""Walk through the layer zoo: forward passes, hand gradients, and the
finite-difference check that keeps them honest.

Run: python demos/01_layers_and_gradients.py
"""

import numpy as np

from ieanet.layers import BatchNorm2d, Conv2d, IeaConv2d, MaxPool2d, ReLU
from ieanet.tensorops import SeededRng


def fd_gradient(f, arr, h=1e-5):
    # central differences, one entry at a time
    grad = np.zeros_like(arr)
    flat, gflat = arr.ravel(), grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


rng = np.random.default_rng(0)
x = rng.normal(size=(2, 2, 8, 8))

print("== plain convolution ==")
conv = Conv2d(2, 4, 3, stride=1, padding=1, rng=SeededRng(1))
out = conv.forward(x)
print(f"input {x.shape} -> output {out.shape}")

# a random projection turns the output into a scalar loss
probe = rng.normal(size=out.shape)
loss = lambda: float(np.sum(conv.forward(x) * probe))
grad_x = conv.backward(probe)
print(f"d(loss)/d(input)  rel err vs finite differences: "
      f"{rel_err(grad_x, fd_gradient(loss, x)):.2e}")
print(f"d(loss)/d(weight) rel err vs finite differences: "
      f"{rel_err(conv.weight.grad, fd_gradient(loss, conv.weight.data)):.2e}")

print()
print("== inner ensemble average ==")
iea = IeaConv2d(2, 4, 3, stride=1, padding=1, m=3, rng=SeededRng(2))
fused = iea.forward(x)
explicit = np.mean([mem.forward(x) for mem in iea.members], axis=0)
print(f"fused forward vs explicit member mean, max gap: "
      f"{np.max(np.abs(fused - explicit)):.2e}")

solo = IeaConv2d(2, 4, 3, stride=1, padding=1, m=1, rng=SeededRng(3))
plain = Conv2d(2, 4, 3, stride=1, padding=1, rng=SeededRng(3))
print(f"m=1 bit-identical to a plain convolution: "
      f"{np.array_equal(solo.forward(x), plain.forward(x))}")

count = lambda layer: sum(p.data.size for p in layer.parameters())
print(f"parameters: plain {count(plain)}, m=3 ensemble {count(iea)} "
      f"(exactly 3x)")

print()
print("== the rest of the stack ==")
bn = BatchNorm2d(4)
normed = bn.forward(fused)
print(f"batch norm train-mode output per-channel mean "
      f"{np.abs(normed.mean(axis=(0, 2, 3))).max():.1e}, "
      f"var {normed.var(axis=(0, 2, 3)).mean():.6f}")

relu = ReLU()
act = relu.forward(normed)
print(f"relu zeroes {100 * np.mean(act == 0):.1f}% of entries")

pool = MaxPool2d(2, 2)
small = pool.forward(act)
print(f"max pool {act.shape[2]}x{act.shape[3]} -> {small.shape[2]}x{small.shape[3]}")

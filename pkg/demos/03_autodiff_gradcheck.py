"""Reverse-mode autodiff on numpy arrays, verified by finite differences.

Run: python demos/03_autodiff_gradcheck.py
"""

import numpy as np

from treesent import autodiff as ad
from treesent.autodiff import Tensor
from treesent.optim import make_rng

rng = make_rng(0)

# Build a small computation: h = tanh(x W + b), loss = mean(h * h).
x = Tensor(rng.normal(size=(4, 3)), dtype=np.float64, requires_grad=True)
w = Tensor(rng.normal(size=(3, 5)), dtype=np.float64, requires_grad=True)
b = Tensor(np.zeros(5), dtype=np.float64, requires_grad=True)

h = ad.tanh(ad.matmul(x, w) + b)
loss = ad.tensor_mean(ad.mul(h, h))
ad.backward(loss)
print("loss:", float(loss.data))
print("dL/dW row 0:", w.grad[0])

# finite_diff_check recomputes the same scalar under small symmetric
# perturbations and reports the worst relative disagreement with the
# analytic gradient. Anything near float64 roundoff means the backward
# pass is correct.
def f(t):
    return ad.tensor_mean(ad.mul(ad.tanh(ad.matmul(x, t) + b),
                                 ad.tanh(ad.matmul(x, t) + b)))

err = ad.finite_diff_check(f, w)
print(f"finite-difference max rel err for W: {err:.2e}")

# The same machinery drives every layer used by the encoder.
g = Tensor(np.ones(3), dtype=np.float64)
beta = Tensor(np.zeros(3), dtype=np.float64)
err_ln = ad.finite_diff_check(
    lambda t: ad.tensor_sum(ad.layer_norm(t, g, beta)), x)
probe = Tensor(rng.normal(size=3))
err_sm = ad.finite_diff_check(
    lambda t: ad.tensor_sum(ad.softmax(t) * probe), x)
print(f"layer_norm rel err: {err_ln:.2e}   softmax rel err: {err_sm:.2e}")

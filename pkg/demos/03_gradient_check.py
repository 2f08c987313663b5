"""
Checking the hand-written backward pass
=======================================

All gradients are derived by hand, including those through variance
pooling and batch statistics. A central finite-difference check on a
scaled-down model compares every parameter gradient with numerical
derivatives. Relative errors below 1e-4 pass.

Run: python3 demos/03_gradient_check.py
"""

from musecognet import ModelConfig, grad_check
from musecognet import model

tiny = ModelConfig.tiny()
print("tiny model:", tiny.kernel_lengths, "kernels,", tiny.filters_per_branch, "filters each, input", tiny.input_shape)

result = grad_check(tiny, seed=0)
for name, err in sorted(result.per_param.items(), key=lambda kv: -kv[1]):
    print(f"  {name:<14} {err:.2e}")
print(f"worst {result.max_rel_error:.2e}  passed={result.passed}")

# The branch biases sit just before batch norm, which cancels any constant
# shift, so their true gradient is zero and the check only sees rounding.

# With no reconstruction term the decoder gets no gradient at all
print("lambda = 0:", grad_check(tiny, seed=0, lam=0.0).passed)

# A broken derivative is caught: pretend ELU has slope 1 everywhere
original = model.elu_grad
model.elu_grad = lambda x: x * 0 + 1
try:
    broken = grad_check(tiny, seed=0)
    print(f"with a wrong ELU derivative: worst {broken.max_rel_error:.2e}  passed={broken.passed}")
finally:
    model.elu_grad = original

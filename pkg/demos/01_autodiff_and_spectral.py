"""Tour of the tensor core: build a small computation on rank-4 tensors,
run the reverse pass, validate a gradient against central differences, and
round-trip an image through the half-spectrum transform.

Run:  python3 demos/01_autodiff_and_spectral.py
"""

import numpy as np

from fsnet.gradcheck import finite_diff_check
from fsnet.spectral import irdft2, naive_rdft2, rdft2
from fsnet.tensor import Tensor, reduce_sum, sigmoid

rng = np.random.default_rng(0)

# ---------------------------------------------------------------- gradients
# All tensors are (batch, channels, height, width). Leaves that should
# receive gradients are flagged with requires_grad.
x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
x.grad = np.zeros_like(x.data)
w.grad = np.zeros_like(w.data)

loss = reduce_sum(sigmoid(x * w) * x)
loss.backward()
print(f"loss = {loss.item():.6f}")
print(f"|dL/dx| mean = {np.abs(x.grad).mean():.6f}")
print(f"|dL/dw| mean = {np.abs(w.grad).mean():.6f}")

# The finite-difference oracle perturbs each coordinate and compares the
# centered difference quotient with the tape gradient.
report = finite_diff_check(lambda: reduce_sum(sigmoid(x * w) * x),
                           {"x": x, "w": w})
print(f"gradcheck worst relative error = {report.worst:.2e}")
assert report.passed(1e-6)

# ----------------------------------------------------------- half-spectrum
# The forward transform keeps only the non-redundant half of the spectrum
# of a real image; the inverse reconstructs the image exactly.
img = Tensor(rng.standard_normal((1, 1, 8, 12)))
F = rdft2(img)
print(f"\nimage {img.shape} -> half-spectrum {F.re.shape}")

back = irdft2(F, 12)
print(f"round-trip max error = {np.abs(back.data - img.data).max():.2e}")

# The fast path matches the literal double-sum definition of the DFT.
slow = naive_rdft2(img.data)
print(f"fast vs naive DFT max error = "
      f"{max(np.abs(F.re.data - slow.real).max(), np.abs(F.im.data - slow.imag).max()):.2e}")

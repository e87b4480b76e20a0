"""Fit polynomial low-pass filters to the ideal cut-off response."""

import numpy as np

from vdfhcd.filtering import fit_lowpass_coeffs

grid = np.linspace(-1, 1, 9)
for order in (1, 2, 4, 6):
    f = fit_lowpass_coeffs(order, cutoff=0.9)
    print(f"M={order} h={np.round(f.coefficients, 4).tolist()} residual={f.residual():.3f}")
    print("    response", np.round(f.response(grid), 3).tolist())

"""Locate the translational eigenvalue of a quintic Nagumo front.

The linearization about a travelling front always has an eigenvalue at zero
whose eigenfunction is the profile derivative. A contour integral around the
origin finds it, together with any other eigenvalue close by. The essential
spectrum starts at -0.045 for this nonlinearity, which bounds how large the
circle may be.
"""

import numpy as np

from freezewave.contour import ContourSpec, ProbeSet, solve_nlevp
from freezewave.core import Field, Grid1D
from freezewave.discretize import DiffOp1D
from freezewave.freeze1d import Problem1D, TemplateProfile, quintic_nagumo_f, solve_steady
from freezewave.spectral import ResolventPencil, dispersion_bound, linearize


def main():
    problem = Problem1D.scalar_reaction(quintic_nagumo_f([0.0, 0.4, 0.5, 0.85, 1.0]))
    grid = Grid1D.from_spacing(-100.0, 100.0, 0.3)
    guess = Field(grid, 0.5 * (np.tanh(grid.nodes()) + 1.0))
    v, mu, _ = solve_steady(problem, guess, 0.07, TemplateProfile.from_field(guess))
    op = linearize(v, mu, problem)
    print(f"front speed mu = {mu:.6f}")
    print(f"dispersion bound beta = {dispersion_bound(op).beta_hat:.6f}")

    pencil = ResolventPencil(op, "projection")
    res = solve_nlevp(pencil, ContourSpec(0.0, 0.02, 32),
                      ProbeSet(pencil.size, 5, 10, seed=0, weights=pencil.weights),
                      eigenvectors=True)
    vx = DiffOp1D("first_central", grid).apply_array(v.values).ravel()
    for k, lam in enumerate(res.eigenvalues):
        cos = abs(np.vdot(res.eigenvectors[:, k], vx)) / np.linalg.norm(vx)
        print(f"  eigenvalue {lam.real: .3e}{lam.imag:+.1e}j   cosine with v_xi = {cos:.6f}")


if __name__ == "__main__":
    main()

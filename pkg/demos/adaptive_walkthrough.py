"""One pass through the data-driven procedure.

Simulates a single realization, then shows the random dimension bound,
the penalty, the contrast and the selected dimension next to the oracle
choice that needs the (unknown) class.
"""
import numpy as np

from seqinv.adaptive import AlphaSeq, adaptive_estimate, penalty_table
from seqinv.estimator import estimate, risk_error_sq
from seqinv.model import ClassParams, NoiseLevels, make_instance, simulate, truncation_length
from seqinv.oracle import oracle_k

params = ClassParams.illustration("mild", p=1, b=1, s=0, r=1, d=2)
noise = NoiseLevels(nu=1e-4, eps=1e-4)
inst = make_instance("boundary-spread", params, truncation_length(noise))
obs = simulate(inst, noise, seed=2024, replication=0)
omega = params.omega_seq

est, trace, bounds = adaptive_estimate(obs, omega)
pen = penalty_table(AlphaSeq.observed(obs.X), noise.nu, omega, bounds.k_hat).pen
print(f"J = {obs.J}, N_hat = {bounds.n_hat}, M_hat = {bounds.m_hat}, K_hat = {bounds.k_hat}")
print(f"{'k':>3} {'S_k':>10} {'pen_k':>10} {'Psi_k + pen_k':>14}")
for k in range(1, bounds.k_hat + 1):
    print(f"{k:3d} {trace.prefix_norms[k - 1]:10.4f} {pen[k - 1]:10.4f} "
          f"{trace.penalized[k - 1]:14.4f}")

k_star = oracle_k(noise.nu, omega, params.s_seq, params.b_seq).k_star
oracle_est = estimate(obs, k_star, omega)
print(f"\nselected k_hat = {trace.k_hat}, oracle k* = {k_star}")
print(f"loss at k_hat: {risk_error_sq(est, inst, omega):.4g}")
print(f"loss at k*:    {risk_error_sq(oracle_est, inst, omega):.4g}")

# the penalty constant is the conservative one from the theory; smaller
# constants select larger dimensions
for c in (600.0, 60.0, 6.0):
    _, tr, _ = adaptive_estimate(obs, omega, penalty_constant=c)
    print(f"penalty constant {c:5.0f}: k_hat = {tr.k_hat}")

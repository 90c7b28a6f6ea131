"""Benchmark quantities for the two illustration families.

For a grid of noise levels this prints the oracle dimension k*, the risk
benchmark psi_nu, the price upsilon_eps of estimating the singular values
and the rate predicted for the family. Run with ``python3 demos/oracle_benchmark.py``.
"""
import numpy as np

from seqinv.model import ClassParams
from seqinv.oracle import oracle_report

for family in ("mild", "severe"):
    params = ClassParams.illustration(family, p=1, b=1, s=0, r=1, d=2)
    print(f"\n{family}: p=1, b=1, s=0, eps = nu")
    print(f"{'nu':>8} {'k*':>4} {'psi_nu':>10} {'upsilon':>10} {'eta':>6} {'rate':>10}")
    for nu in np.logspace(-2, -8, 7):
        rep = oracle_report(nu, nu, params)
        print(f"{nu:8.0e} {rep.k_star:4d} {rep.psi_nu:10.3e} {rep.upsilon_eps:10.3e} "
              f"{rep.eta:6.3f} {rep.theoretical_rate:10.3e}")

# the oracle dimension grows like a power of 1/nu in the mild case but
# only like |log nu|**(1/2) in the severe one

"""Monte Carlo risk of the oracle-dimension estimator against the noise level.

Fits the log-log slope for the mildly ill-posed family (theory: 2/5) and
writes an SVG figure to the directory given on the command line
(default: the current directory).
"""
import sys
from pathlib import Path

import numpy as np

from seqinv.cli import write_svg
from seqinv.model import ClassParams, NoiseLevels, make_instance, truncation_length
from seqinv.verify import mc_risk, rate_fit

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(".")
params = ClassParams.illustration("mild", p=1, b=1, s=0, r=1, d=2)
nus = np.logspace(-5, -2, 8)
risks = []
for nu in nus:
    noise = NoiseLevels(nu, nu ** 2)
    inst = make_instance("boundary-spread", params, truncation_length(noise))
    rep = mc_risk(inst, noise, replications=1000, seed=0, workers=4)
    risks.append(rep.risk_mean)
    print(f"nu={nu:8.1e}  k*={rep.k_max:3d}  risk={rep.risk_mean:.4e} +- {rep.risk_stderr:.1e}")

fit = rate_fit(nus, risks, expected_slope=0.4)
print(f"fitted slope {fit.slope:.3f} (theory 0.4)")
path = write_svg(out / "mild_rate.svg", fit, "mild, oracle dimension", "log nu")
print(f"figure written to {path}")

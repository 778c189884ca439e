"""How long the growth stage lasts as the dimension grows.

The spectral update's turning time is dimension-free (all coefficients grow
at the same unit rate in square-root space, so the spike saturates after a
constant number of steps when eta = kappa/sqrt(d+lambda)).  GD's turning
time grows like log(d)/(eta*lambda) because the spike must climb from its
initialization scale ~rho0/d to 1/3 geometrically.

Writes ``out/stages/stages_gd.csv`` and ``out/stages/stages_specgd.csv``.
Render with

    specplot stage_scaling out/stages/stages_gd.csv -o stages_gd.png
"""

from specdyn import run_stage_scaling

DIMS = [100, 200, 400, 800, 1600]

spec = run_stage_scaling(DIMS, "specgd", lambda_rule="d_over_10",
                         eta_rule="kappa:0.05", rho0=0.01, horizon=5000,
                         outdir="out/stages")
print("spectral turning times:", [row["T1"] for row in spec.rows])
print("fit:", spec.fit)

gd = run_stage_scaling(DIMS, "gd", lambda_rule="sqrt", eta_rule="etalam:0.02",
                       rho0=0.02, horizon=50000, outdir="out/stages")
print("GD turning times:      ", [row["T1"] for row in gd.rows])
print("fit:", gd.fit)

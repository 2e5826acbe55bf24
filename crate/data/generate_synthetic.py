"""Writes the synthetic stand-in data sets used by the Australian preset.

au_panel_synthetic.csv: monthly real returns of four indices plus CPI change,
1935-01 to 2022-12, drawn from a Gaussian with the target annual moments.
au_history_synthetic.csv: male deaths and exposures, ages 55-95, years
1987-2021, from a Gompertz law improving by about 2% a year.
"""

import numpy as np

rng = np.random.default_rng(20221231)

names = ["au_equity", "au_bond", "us_equity", "us_tbill"]
mean_ann = np.array([0.069, 0.012, 0.082, 0.003])
vol_ann = np.array([0.151, 0.036, 0.165, 0.095])
corr = np.array(
    [
        [1.00, 0.11, 0.33, -0.22],
        [0.11, 1.00, 0.10, 0.17],
        [0.33, 0.10, 1.00, 0.34],
        [-0.22, 0.17, 0.34, 1.00],
    ]
)
cov = np.outer(vol_ann, vol_ann) * corr / 12.0
months = [(y, m) for y in range(1935, 2023) for m in range(1, 13)]
r = rng.multivariate_normal(mean_ann / 12.0, cov, size=len(months))
cpi = rng.normal(0.0035, 0.006, size=len(months))
with open("au_panel_synthetic.csv", "w") as f:
    f.write("date," + ",".join(names) + ",cpi\n")
    for (y, m), row, c in zip(months, r, cpi):
        f.write(f"{y}-{m:02d}," + ",".join(f"{v:.6f}" for v in row) + f",{c:.6f}\n")

with open("au_history_synthetic.csv", "w") as f:
    f.write("year,age,deaths,exposure\n")
    for year in range(1987, 2022):
        for age in range(55, 96):
            mu = np.exp(-5.3 + 0.095 * (age - 55) - 0.02 * (year - 1987))
            exposure = 60000.0 * np.exp(-0.035 * (age - 55))
            deaths = rng.poisson(mu * exposure)
            f.write(f"{year},{age},{deaths},{exposure:.1f}\n")

"""Side-by-side of the primal-dual solver and the three direct baselines.

Each variant trains on the same data with its tuned canonical settings,
then reports retrieval quality and quantization error.  Mirrors what
`dualhash compare` produces as CSV.
"""

from dualhash import cli

print(f"{'variant':18s} {'mAP':>8s} {'AP@r=2':>8s} {'quant':>8s}")
for variant in cli.VARIANTS:
    cfg = cli.canonical_config(variant, seed=1)
    cfg["dataset"].update(per_class_train=40, per_class_query=10)
    cfg["optimizer"]["T"] = 600
    cfg["logging"].update(log_every=100, sigma_probe=None)
    result, report, _ = cli.execute(cfg)
    print(
        f"{variant:18s} {report.map:8.4f} {report.ap_at_r2:8.4f} "
        f"{report.quant_error:8.4f}"
    )

print(
    "\nThe dual-handled penalty drives the continuous codes much closer to\n"
    "+-1 than subgradient training at comparable settings; the smooth\n"
    "log-cosh baseline sits in between."
)

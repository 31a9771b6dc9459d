"""Print analytic FLOP totals per variant, plus stripe-count and pool-position sweeps."""

import argparse
from dataclasses import replace

from stenvan.backbone import BackboneConfig
from stenvan.flops import flops_model, format_variant_table, variant_reports


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=8)
    ap.add_argument("--height", type=int, default=256)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--stripes", type=int, default=16)
    args = ap.parse_args()
    hw = (args.height, args.width)

    reports = variant_reports(args.frames, hw, args.stripes)
    print(format_variant_table(reports))
    totals = {r.variant: r.total for r in reports}
    print()
    print(f"ste_nvan / nvan     = {totals['ste_nvan'] / totals['nvan']:.3f}")
    print(f"ste_nvan / baseline = {totals['ste_nvan'] / totals['baseline']:.3f}")
    print(f"nvan / baseline     = {totals['nvan'] / totals['baseline']:.3f}")

    base = BackboneConfig(frames=args.frames, input_hw=hw, stripes=args.stripes)
    print("\nstripe count (nvan_spatial)")
    for s in (1, 2, 4, 8, 16):
        total = flops_model(replace(base, variant="nvan_spatial", stripes=s)).total
        print(f"  S={s:<3d} {total / 1e9:6.2f} G")

    print("\ntemporal pool positions (nvan_temporal)")
    for pts in ((), (2,), (5,), (2, 5)):
        total = flops_model(replace(base, variant="nvan_temporal", temporal_pool_points=pts)).total
        print(f"  after {str(list(pts)):<8} {total / 1e9:6.2f} G")


if __name__ == "__main__":
    main()

"""The retrieval metrics on hand-built codes, where every number is obvious."""

import numpy as np

from dualhash.metrics import (
    average_precision,
    hamming_dist,
    hamming_histograms,
    mean_ap,
    precision_within_radius,
    quantization_error,
)

d = 8
a = np.ones(d)
b = a.copy()
b[:4] = -1
print(f"hamming_dist(ones, ones)       = {hamming_dist(a, a)}")
print(f"hamming_dist(ones, half-flip)  = {hamming_dist(a, b)}")
print(f"hamming_dist(ones, -ones)      = {hamming_dist(a, -a)}")

print("\naverage precision down a ranked list:")
print(f"  relevance [1,0,1], 2 relevant total -> {average_precision([1,0,1], R_q=2):.4f}")
print(f"  all three relevant                  -> {average_precision([1,1,1], R_q=3):.4f}")

# two antipodal classes: perfect retrieval, maximal separability
codes = np.vstack([np.tile(a, (3, 1)), np.tile(-a, (3, 1))])
labels = np.zeros((6, 2), dtype=bool)
labels[:3, 0] = True
labels[3:, 1] = True
print("\nantipodal two-class code bank:")
print(f"  mAP        = {mean_ap(codes, labels, codes, labels):.4f}")
print(f"  AP@r=2     = {precision_within_radius(codes, labels, codes, labels):.4f}")
intra, inter, sep = hamming_histograms(codes, labels)
print(f"  separability = {sep:.1f} bits (intra mass at 0: {intra[0]:.0%}, "
      f"inter mass at {d}: {inter[d]:.0%})")

print("\nquantization error of continuous codes:")
for scale in (0.999999, 0.9, 0.5):
    U = codes * scale
    print(f"  |u| = {scale}: {quantization_error(U):.6f}")
print("  all-zero codes:", quantization_error(np.zeros((4, d))))

"""Quadratic attention cost and what segmentation buys in practice.

    python3 demos/03_cost_model.py
"""

import torch

from hicom.bench import DEFAULT_CONFIGS, model_cost, runtime_bench, segmentation_timing

torch.set_num_threads(1)

print("cost of one 1024-token pass:", model_cost([1024]))
print("cost of eight 128-token passes:", model_cost([128] * 8))

t = segmentation_timing(total=1024, segments=8, trials=5)
print(f"forward+backward: flat {t['flat_ms']:.1f} ms, segmented {t['segmented_ms']:.1f} ms")
print(f"measured ratio {t['measured_ratio']:.3f} against a predicted {t['predicted_ratio']:.3f}")

print("\nepoch time on a long-text graph (texts fill half of each 256-token slot):")
for r in runtime_bench(DEFAULT_CONFIGS, trials=3):
    print(f"  {r.label:<20}{r.time_ms:>9.0f} ms   cost {r.predicted_cost:>10}   "
          f"dummy share {r.waste_before:.2f} -> {r.waste_after:.2f}")

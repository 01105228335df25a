"""Why small feature steps suit a shared forecaster.

Coordinates in the synthetic data move in blocks of 8.  Cutting frames into
segments the size of a block keeps neighbouring segments strongly related,
while longer segments average several independent blocks together.
"""
import numpy as np

from fmrnn import SynthSpec, synth_generate
from fmrnn.data import avg_correlation_vs_stepsize, correlation_matrix
from fmrnn.featmap import plan_segments

sequences, _ = synth_generate(SynthSpec(videos_per_class=10))
for D, value in avg_correlation_vs_stepsize(sequences, [2, 4, 8, 16, 32]):
    print(f"D={D:2d}  mean |corr| between segments {value:.3f}")

# sanity check: two identical blocks correlate perfectly
rng = np.random.default_rng(0)
block = rng.standard_normal((100, 4))
C = correlation_matrix(np.hstack([block, block]), 4)
print(f"\ncopied block correlation: {C[0, 1]:.12f}")

# overlapping segments: coordinates covered twice are averaged on the way back
plan = plan_segments(10, 4, 2)
print(f"\nd=10, D=4, S=2 -> offsets {plan.segment_offsets}")
seg = np.arange(plan.n_segments * 4, dtype=float).reshape(plan.n_segments, 4)
print("segments\n", seg)
print("merged", plan.merge(seg))

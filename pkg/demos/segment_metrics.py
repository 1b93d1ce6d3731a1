"""Why two error metrics: frame accuracy and segment edit distance disagree.

A recognizer can be wrong in two very different ways. Shaving the edges of
each segment costs many frames but keeps the activity sequence intact;
hallucinating a brief spurious activity costs almost no frames but breaks
the sequence. Frame error sees the first mistake, edit distance the second.
"""

import numpy as np

from motionrec.metrics import edit_distance, error_rate, normalized_edit_distance, to_segments

truth = np.repeat([0, 2, 1, 3, 1], [40, 30, 50, 20, 60])
segs = to_segments(truth)
print(f"ground truth: {truth.size} frames, {len(segs)} segments")
for s in segs:
    print(f"  activity {s.activity}: frames [{s.start}, {s.start + s.length})")

# Mistake 1: every boundary lands 6 frames late. Lots of wrong frames, but
# the segment string is untouched.
late = truth.copy()
for s in segs[1:]:
    late[s.start:s.start + 6] = truth[s.start - 1]

# Mistake 2: a single 3-frame flicker in the middle of a long segment.
flicker = truth.copy()
flicker[100:103] = 3

print(f"\n{'prediction':>14} {'frame error':>12} {'segments':>9} {'edit dist':>10}")
for name, pred in (("late edges", late), ("flicker", flicker)):
    fe = error_rate(pred, truth)
    ed = edit_distance(to_segments(pred), segs)
    print(f"{name:>14} {fe:>11.1%} {len(to_segments(pred)):>9} {ed:>10}")

# late edges: ~12% of frames wrong, edit distance 0
# flicker: <2% of frames wrong, edit distance 2 (insert the flicker, then
# the original segment resumes and counts once more)

# the normalizer for reporting across a test set is the LARGEST ground-truth
# segment count in that set, so trials with few segments cannot blow up the
# percentage
distances = [edit_distance(to_segments(p), segs) for p in (late, flicker)]
counts = [len(segs), len(segs)]
print(f"\nnormalized edit distance over both trials: "
      f"{normalized_edit_distance(distances, counts):.1f}%")

# Degenerate but legal case: a prediction that collapses to one activity.
collapsed = np.zeros_like(truth)
print(f"\nall-zeros prediction: frame error {error_rate(collapsed, truth):.1%}, "
      f"edit distance {edit_distance(to_segments(collapsed), segs)} "
      f"(delete four of the five true segments)")

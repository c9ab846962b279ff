"""The attention head that turns region scores into a saliency map.

Feeds a hand-built feature grid (one "hot" corner) through the module and
shows how the per-region sigmoid scores, the softmax weights, and the pooled
global feature respond.
"""
import numpy as np

from weaksal import attention as A
from weaksal.tensor import Tensor


def main():
    rng = np.random.default_rng(1)
    d, h, w = 6, 4, 4
    params = A.init_attention_params(rng, d, d_prime=5)

    # scoring weights start at zero, so the map starts flat at 0.5
    feats = np.zeros((d, h, w), dtype=np.float32)
    feats[:, 3, 3] = 2.0  # a distinctive region in one corner
    out = A.attention_forward(Tensor(feats), params)
    print("fresh module: map is flat:")
    print(np.round(out.s.data, 3))

    # hand-set the scorer to favor the hot channel pattern
    params.w_s.data[:] = 0.8
    out = A.attention_forward(Tensor(feats), params)
    print("\nafter pointing w_s at the feature pattern:")
    print(np.round(out.s.data, 3))
    alpha = out.alpha.data.reshape(h, w)
    print("\nsoftmax attention weights (sum to 1):")
    print(np.round(alpha, 3))
    print(f"\npooled feature norm: {np.linalg.norm(out.g.data):.3f} "
          f"(driven by the gated corner region)")


if __name__ == "__main__":
    main()

"""The four weak-supervision losses and the bootstrapped distillation loss.

Each section builds the smallest input that exposes one documented property:
the flat-map anchor values, teacher detachment in the transfer loss, the
empty-seed escape hatch in the coherence loss, and the bootstrapping loss
collapsing to plain cross-entropy at delta=1.
"""
import numpy as np

from weaksal import losses as L
from weaksal.networks import CNetOutput
from weaksal.tensor import Tensor


def main():
    rng = np.random.default_rng(0)
    weights = L.LossWeights()
    n, h, w, c = 1, 6, 6, 4
    k = h * w

    # 1. category loss on an all-uniform network output: the likelihood part
    #    is C*ln2 (zero logits), the suppression part beta*K*ln2 (flat 0.5 map)
    out = CNetOutput(class_logits=Tensor(np.zeros((n, c))),
                     s=Tensor(np.full((n, h, w), 0.5)))
    labels = np.eye(c, dtype=int)[:1]
    value = L.category_localization_loss(labels, out, weights).item()
    anchor = c * np.log(2.0) + weights.beta * k * np.log(2.0)
    print(f"category loss on uniform outputs: {value:.6f} "
          f"(C*ln2 + beta*K*ln2 = {anchor:.6f})")

    # 2. transfer loss: the thresholded teacher is detached, so gradient
    #    reaches only the student map
    s_c = Tensor(rng.uniform(0.1, 0.9, size=(n, h, w)), requires_grad=True)
    s_p = Tensor(rng.uniform(0.1, 0.9, size=(n, h, w)), requires_grad=True)
    L.attention_transfer_loss(s_c, s_p, "category").backward()
    print("transfer on a category batch: teacher grad is",
          "None" if s_c.grad is None else "set",
          "/ student grad norm", f"{np.abs(s_p.grad).sum():.4f}")

    # 3. coherence loss: an image with no positive region contributes zero
    pos = np.zeros((n, h, w), dtype=bool)
    value = L.attention_coherence_loss(s_c, s_p, pos, ~pos).item()
    print(f"coherence with an empty positive set: {value:.6f}")

    # 4. bootstrapping: prediction 0.6 against pseudo label 0; the model's
    #    own hard threshold dominates at the default delta
    s = Tensor(np.full((2, 2), 0.6))
    y = np.zeros((2, 2))
    value = L.bootstrapping_loss(s, y, weights).item()
    anchor = -(0.95 * np.log(0.6) + 0.05 * np.log(0.4))
    print(f"bootstrapped CE, delta={weights.delta}: {value:.6f} "
          f"(closed form {anchor:.6f})")

    #    and at delta=1 the same call is plain cross-entropy on the label
    plain = L.bootstrapping_loss(s, y, L.LossWeights(delta=1.0)).item()
    print(f"bootstrapped CE, delta=1.0: {plain:.6f} "
          f"(plain -ln(1-0.6) = {-np.log(0.4):.6f})")


if __name__ == "__main__":
    main()

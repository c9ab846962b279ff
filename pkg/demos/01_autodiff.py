"""Reverse-mode autodiff on the built-in tensor library.

Builds a small computation, checks its gradients against finite differences,
and fits a two-layer network to a toy regression task with Adam.
"""
import numpy as np

from weaksal import tensor as T
from weaksal.gradcheck import check_gradients
from weaksal.tensor import Adam, Tensor


def main():
    rng = np.random.default_rng(0)

    # 1. a composite expression, differentiated exactly
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    y = T.sigmoid(T.affine(T.relu(x), w)).sum()
    y.backward()
    print("dy/dw[0,0] from the tape:", f"{w.grad[0, 0]:+.6f}")

    # 2. the same graph validated against central finite differences
    def build(leaves):
        return T.sigmoid(T.affine(T.relu(leaves[0]), leaves[1])).sum()

    err = check_gradients(build, [x.data, w.data])
    print(f"gradient check, worst relative error: {err:.2e}")

    # 3. Adam fits a noisy linear map through a hidden layer
    true_w = rng.standard_normal((5, 1))
    xs = rng.standard_normal((64, 5)).astype(np.float32)
    ys = (xs @ true_w + 0.01 * rng.standard_normal((64, 1))).astype(np.float32)
    w1 = Tensor(0.3 * rng.standard_normal((5, 8)).astype(np.float32), requires_grad=True)
    w2 = Tensor(0.3 * rng.standard_normal((8, 1)).astype(np.float32), requires_grad=True)
    opt = Adam([w1, w2], lr=0.02)
    for step in range(200):
        opt.zero_grad()
        pred = T.affine(T.relu(T.affine(Tensor(xs), w1)), w2)
        err = T.sub(pred, Tensor(ys))
        loss = T.mul(err, err).mean()
        loss.backward()
        opt.step()
        if step % 50 == 0 or step == 199:
            print(f"step {step:3d}  mse {loss.item():.5f}")


if __name__ == "__main__":
    main()

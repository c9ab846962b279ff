"""End-to-end miniature run of the whole pipeline in a temporary directory.

Generates a tiny three-source dataset, trains the weakly supervised pair for
a handful of steps, distills pseudo labels, fits the saliency network on
them, and finishes with evaluation plus standalone inference. Settings are
shrunk so the demo finishes in well under a minute; the printed numbers are
not meant to be good, only to show every stage producing its artifact.
"""
import os
import tempfile

from weaksal import data, train
from weaksal.train import TrainConfig


def main():
    root = tempfile.mkdtemp(prefix="pipeline_demo_")
    print("working under", root)

    records = data.synth_dataset(os.path.join(root, "ds"), n_per_source=6,
                                 seed=5, image_size=48)
    manifest = os.path.join(root, "ds", "manifest.jsonl")
    print(f"dataset: {len(records)} records")

    micro = dict(seed=5, batch_size=2, image_size=48, widths=(4, 8, 8, 8),
                 d_attn=8, d_embed=8, d_hidden=16, n_segments=30,
                 checkpoint_every=10)

    weak_dir = os.path.join(root, "weak")
    ckpt = train.train_weak(TrainConfig(stage="weak", steps=10, **micro),
                            manifest, weak_dir)
    print("weak checkpoint:", os.path.relpath(ckpt, root))

    pseudo_dir = os.path.join(root, "pseudo")
    train.gen_pseudo(ckpt, manifest, pseudo_dir, batch_size=2)
    n_labels = len([f for f in os.listdir(pseudo_dir) if f.endswith(".png")])
    print(f"pseudo labels: {n_labels} files")

    snet_dir = os.path.join(root, "snet")
    snet_ckpt = train.train_snet(TrainConfig(stage="snet", steps=10, **micro),
                                 pseudo_dir, snet_dir)
    print("snet checkpoint:", os.path.relpath(snet_ckpt, root))

    report = train.evaluate(snet_ckpt, manifest,
                            os.path.join(root, "eval"), batch_size=2)
    print(f"evaluation: mae={report.mae:.4f} max_f={report.max_f:.4f}")

    images = [r.image for r in records if r.source == "unlabelled"][:2]
    outs = train.infer(snet_ckpt, images, os.path.join(root, "maps"),
                       batch_size=2)
    print("inference wrote:", ", ".join(os.path.relpath(p, root) for p in outs))


if __name__ == "__main__":
    main()

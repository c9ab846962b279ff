"""Orchestration tests: config parsing, both training stages, checkpoint
resume fidelity, pseudo-label generation, evaluation, and inference."""

import json
import os

import numpy as np
import pytest

from weaksal import data
from weaksal import pseudolabels
from weaksal import losses
from weaksal import tensor as T
from weaksal import train
from weaksal.tensor import Adam, Tensor, load_checkpoint
from weaksal.train import TrainConfig


def micro_config(**kw):
    """Smallest legal settings so each step costs milliseconds."""
    base = dict(stage="weak", seed=13, steps=3, batch_size=2, image_size=48,
                widths=(4, 8, 8, 8), d_attn=8, d_embed=8, d_hidden=16,
                n_segments=30, checkpoint_every=1)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    records = data.synth_dataset(str(root), n_per_source=4, seed=11,
                                 image_size=48)
    return root, records


@pytest.fixture(scope="module")
def manifest(dataset):
    root, _ = dataset
    return str(root / "manifest.jsonl")


class TestTrainConfig:
    def test_defaults_are_desk_scale(self):
        cfg = TrainConfig()
        assert cfg.steps == 2000 and cfg.batch_size == 8
        assert cfg.image_size == 96 and cfg.lr == 1e-4
        assert cfg.beta == 0.005 and cfg.lam == 0.01 and cfg.delta == 0.05

    def test_from_file_parses_values_and_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# training settings\n"
            "steps = 10        # short run\n"
            "widths = [4, 8, 8, 8]\n"
            "lr = 2e-4\n"
            "refiner = off\n"
            "sources = [\"category\", \"caption\"]\n"
            "\n")
        cfg = TrainConfig.from_file(str(path))
        assert cfg.steps == 10
        assert cfg.widths == (4, 8, 8, 8)
        assert cfg.lr == 2e-4
        assert cfg.refiner == "off"
        assert cfg.sources == ("category", "caption")

    def test_from_file_overrides_win(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps = 10\nlr = 2e-4\n")
        cfg = TrainConfig.from_file(str(path), overrides={"steps": 7})
        assert cfg.steps == 7 and cfg.lr == 2e-4

    def test_from_file_unknown_key_names_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("steps = 10\nlearning_rate = 1e-3\n")
        with pytest.raises(ValueError, match=r":2.*learning_rate"):
            TrainConfig.from_file(str(path))

    def test_from_file_requires_key_value(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ValueError, match="key = value"):
            TrainConfig.from_file(str(path))

    def test_dict_roundtrip(self):
        cfg = micro_config(lam=0.5, refiner="off")
        clone = TrainConfig.from_dict(cfg.to_dict())
        assert clone == cfg

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="momentum"):
            TrainConfig.from_dict({"momentum": 0.9})

    @pytest.mark.parametrize("kw", [
        {"stage": "finetune"},
        {"steps": 0},
        {"image_size": 100},
        {"image_size": 16},
        {"lr": 0.0},
        {"sources": ()},
        {"sources": ("category", "category")},
        {"sources": ("category", "video")},
        {"refiner": "dense"},
        {"threshold": 1.0},
        {"n_segments": 1},
        {"lam": 1.5},
    ])
    def test_invalid_settings_rejected(self, kw):
        with pytest.raises(ValueError):
            micro_config(**kw)

    def test_properties(self):
        cfg = micro_config(beta=0.01, lam=0.2, delta=0.3, refine_radius=4,
                           refine_weight=2.0)
        assert cfg.network_config.widths == (4, 8, 8, 8)
        assert cfg.network_config.d_attn == 8
        w = cfg.loss_weights
        assert (w.beta, w.lam, w.delta) == (0.01, 0.2, 0.3)
        rp = cfg.refine_params
        assert rp.radius == 4 and rp.weight == 2.0
        assert micro_config(refiner="off").refine_params is None


class TestBuildNetworks:
    def test_same_seed_same_weights(self):
        cfg = micro_config()
        c1, p1 = train.build_networks(cfg)
        c2, p2 = train.build_networks(cfg)
        for a, b in ((c1, c2), (p1, p2)):
            for name, t in a.named_params().items():
                assert np.array_equal(t.data, b.named_params()[name].data)

    def test_snet_independent_of_stage_field(self):
        a = train.build_snet(micro_config(stage="weak"))
        b = train.build_snet(micro_config(stage="snet"))
        for name, t in a.named_params().items():
            assert np.array_equal(t.data, b.named_params()[name].data)


def _ckpt_tensors(path):
    tensors, hyper = load_checkpoint(path)
    return tensors, hyper


class TestTrainWeak:
    def test_runs_and_logs(self, manifest, tmp_path):
        cfg = micro_config(steps=3)
        path = train.train_weak(cfg, manifest, str(tmp_path / "weak"))
        assert os.path.exists(path) and os.path.exists(path + ".json")
        rows = (tmp_path / "weak" / "weak_log.csv").read_text().splitlines()
        assert rows[0] == "step,source,l_c,l_p,l_at,l_ac,l_total"
        assert len(rows) == 4
        # round-robin over sources in config order
        assert [r.split(",")[1] for r in rows[1:]] == [
            "category", "caption", "unlabelled"]
        for r in rows[1:]:
            assert r.split(",")[-1] != ""

    def test_deterministic_across_runs(self, manifest, tmp_path):
        cfg = micro_config(steps=3)
        p1 = train.train_weak(cfg, manifest, str(tmp_path / "a"))
        p2 = train.train_weak(cfg, manifest, str(tmp_path / "b"))
        t1, h1 = _ckpt_tensors(p1)
        t2, h2 = _ckpt_tensors(p2)
        assert set(t1) == set(t2)
        for k in t1:
            assert np.array_equal(t1[k], t2[k]), k
        assert h1["adam_t"] == h2["adam_t"]

    def test_resume_replays_identical_trajectory(self, manifest, tmp_path):
        full = train.train_weak(micro_config(steps=4), manifest,
                                str(tmp_path / "full"))
        half = train.train_weak(micro_config(steps=2), manifest,
                                str(tmp_path / "split"))
        resumed = train.train_weak(micro_config(steps=4), manifest,
                                   str(tmp_path / "split"), resume=half)
        tf, hf = _ckpt_tensors(full)
        tr, hr = _ckpt_tensors(resumed)
        for k in tf:
            assert np.array_equal(tf[k], tr[k]), k
        assert hf["adam_t"] == hr["adam_t"] == 4
        log_full = (tmp_path / "full" / "weak_log.csv").read_text()
        log_split = (tmp_path / "split" / "weak_log.csv").read_text()
        assert log_full == log_split

    @staticmethod
    def _init_snapshot(cfg):
        cnet, pnet = train.build_networks(cfg)
        return {**{f"cnet.{k}": v.data for k, v in cnet.named_params().items()},
                **{f"pnet.{k}": v.data for k, v in pnet.named_params().items()}}

    def test_category_step_gradient_sparsity(self, manifest, tmp_path):
        """One category batch trains the classifier fully; the caption net
        moves only in its saliency scorer. Its backbone stays put because the
        scorer weights start at zero, and its sequence decoder is not even in
        the graph. b_a is left unasserted: softmax shift invariance makes its
        true gradient zero, but float32 leaves a rounding residue."""
        cfg = micro_config(steps=1, augment=False)
        path = train.train_weak(cfg, manifest, str(tmp_path / "probe"))
        tensors, _ = _ckpt_tensors(path)
        init = self._init_snapshot(cfg)
        changed = ["cnet.backbone.b1c1.w", "cnet.backbone.b4c2.w",
                   "cnet.attn.w_s", "cnet.attn.b_s", "cnet.attn.w_f",
                   "cnet.attn.b_f", "cnet.attn.w_a", "cnet.cls.w",
                   "cnet.cls.b", "pnet.attn.w_s", "pnet.attn.b_s"]
        untouched = ["pnet.backbone.b1c1.w", "pnet.backbone.b4c2.w",
                     "pnet.embed.table", "pnet.lstm.w_xi", "pnet.lstm.w_hf",
                     "pnet.lstm.b_o", "pnet.out.w", "pnet.out.b",
                     "pnet.proj.w", "pnet.proj.b", "pnet.attn.w_f",
                     "pnet.attn.b_f", "pnet.attn.w_a", "pnet.attn.b_a"]
        for name in changed:
            assert not np.array_equal(tensors[name], init[name]), name
        for name in untouched:
            assert np.array_equal(tensors[name], init[name]), name

    def test_caption_step_gradient_sparsity(self, manifest, tmp_path):
        cfg = micro_config(steps=1, sources=("caption",), augment=False)
        path = train.train_weak(cfg, manifest, str(tmp_path / "probe"))
        tensors, _ = _ckpt_tensors(path)
        init = self._init_snapshot(cfg)
        changed = ["pnet.embed.table", "pnet.lstm.w_xi", "pnet.lstm.w_hf",
                   "pnet.out.w", "pnet.out.b", "pnet.proj.w", "pnet.proj.b",
                   "pnet.attn.w_s", "pnet.attn.b_s", "pnet.attn.w_f",
                   "pnet.attn.b_f", "pnet.attn.w_a",
                   "pnet.backbone.b1c1.w", "pnet.backbone.b4c2.w",
                   "cnet.attn.w_s", "cnet.attn.b_s"]
        untouched = ["cnet.backbone.b1c1.w", "cnet.backbone.b4c2.w",
                     "cnet.cls.w", "cnet.cls.b", "cnet.attn.w_f",
                     "cnet.attn.b_f", "cnet.attn.w_a", "cnet.attn.b_a"]
        for name in changed:
            assert not np.array_equal(tensors[name], init[name]), name
        for name in untouched:
            assert np.array_equal(tensors[name], init[name]), name

    def test_transfer_reaches_partner_backbone_once_scorer_is_live(
            self, manifest, tmp_path):
        """After the first step wakes the caption net's scorer, the map
        supervision starts moving its backbone too."""
        cfg = micro_config(steps=2, sources=("category",), augment=False)
        path = train.train_weak(cfg, manifest, str(tmp_path / "probe"))
        tensors, _ = _ckpt_tensors(path)
        init = self._init_snapshot(cfg)
        assert not np.array_equal(tensors["pnet.backbone.b1c1.w"],
                                  init["pnet.backbone.b1c1.w"])
        assert np.array_equal(tensors["pnet.embed.table"],
                              init["pnet.embed.table"])

    def test_zero_lam_unlabelled_step_is_exact_noop(self, manifest, tmp_path):
        two = train.train_weak(micro_config(steps=2, lam=0.0), manifest,
                               str(tmp_path / "two"))
        three = train.train_weak(micro_config(steps=3, lam=0.0), manifest,
                                 str(tmp_path / "three"))
        t2, h2 = _ckpt_tensors(two)
        t3, h3 = _ckpt_tensors(three)
        for k in t2:
            assert np.array_equal(t2[k], t3[k]), k
        assert h2["adam_t"] == h3["adam_t"] == 2
        rows = (tmp_path / "three" / "weak_log.csv").read_text().splitlines()
        step2 = rows[3].split(",")
        assert step2[1] == "unlabelled"
        assert step2[5] == ""               # no coherence term evaluated
        assert float(step2[6]) == 0.0       # total identically zero

    def test_missing_source_warns_and_continues(self, dataset, tmp_path, caplog):
        root, records = dataset
        partial = root / "partial.jsonl"  # beside the images: paths resolve
        kept = [r for r in records if r.source == "category"]
        with open(root / "manifest.jsonl") as fh:
            lines = [ln for ln in fh if json.loads(ln)["source"] == "category"]
        partial.write_text("".join(lines))
        cfg = micro_config(steps=2)
        with caplog.at_level("WARNING", logger="weaksal.train"):
            path = train.train_weak(cfg, str(partial), str(tmp_path / "w"))
        assert any("caption" in r.message for r in caplog.records)
        assert any("unlabelled" in r.message for r in caplog.records)
        rows = (tmp_path / "w" / "weak_log.csv").read_text().splitlines()[1:]
        assert [r.split(",")[1] for r in rows] == ["category", "category"]
        assert len(kept) > 0 and os.path.exists(path)

    def test_empty_manifest_rejected(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        with pytest.warns(UserWarning, match="empty"):
            with pytest.raises(ValueError, match="no records"):
                train.train_weak(micro_config(), str(empty), str(tmp_path / "w"))

    def test_wrong_stage_rejected(self, manifest, tmp_path):
        with pytest.raises(ValueError, match="stage"):
            train.train_weak(micro_config(stage="snet"), manifest,
                             str(tmp_path / "w"))

    def test_image_size_mismatch_rejected(self, manifest, tmp_path):
        cfg = micro_config(image_size=96)
        with pytest.raises(ValueError, match="48"):
            train.train_weak(cfg, manifest, str(tmp_path / "w"))


@pytest.fixture(scope="module")
def weak_ckpt(manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("weak")
    return train.train_weak(micro_config(steps=2), manifest, str(out))


@pytest.fixture(scope="module")
def pseudo_dir(weak_ckpt, manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("pl")
    return train.gen_pseudo(weak_ckpt, manifest, str(out))


class TestGenPseudo:
    def test_counts_and_binary(self, weak_ckpt, manifest, tmp_path):
        out = train.gen_pseudo(weak_ckpt, manifest, str(tmp_path / "pl"))
        stored = pseudolabels.load_pseudo_labels(out)
        assert len(stored) == 4  # one per unlabelled record
        for image_id, lab in stored.items():
            assert image_id.startswith("unl_")
            assert set(np.unique(lab.label)) <= {0, 1}
            assert lab.provenance["image"].endswith(f"{image_id}.png")
            assert lab.provenance["fusion"] == "mean"

    def test_refiner_off_recorded(self, weak_ckpt, manifest, tmp_path):
        out = train.gen_pseudo(weak_ckpt, manifest, str(tmp_path / "pl"),
                               overrides={"refiner": "off"})
        stored = pseudolabels.load_pseudo_labels(out)
        assert all(lab.provenance["refiner"] == "off"
                   for lab in stored.values())

    def test_unreadable_image_skipped(self, weak_ckpt, dataset, tmp_path, caplog):
        root, records = dataset
        unl = [r for r in records if r.source == "unlabelled"]
        man = tmp_path / "broken.jsonl"
        lines = [json.dumps({"image": r.image, "source": "unlabelled"})
                 for r in unl[:2]]
        lines.append(json.dumps({"image": str(tmp_path / "missing.png"),
                                 "source": "unlabelled"}))
        man.write_text("\n".join(lines) + "\n")
        with caplog.at_level("WARNING", logger="weaksal.train"):
            out = train.gen_pseudo(weak_ckpt, str(man), str(tmp_path / "pl"))
        assert any("missing.png" in r.message for r in caplog.records)
        assert len(pseudolabels.load_pseudo_labels(out)) == 2

    def test_no_unlabelled_uses_all_with_warning(self, weak_ckpt, dataset,
                                                 tmp_path, caplog):
        root, records = dataset
        cats = [r for r in records if r.source == "category"]
        man = tmp_path / "cats.jsonl"
        man.write_text("\n".join(
            json.dumps({"image": r.image, "source": "category",
                        "labels": r.labels}) for r in cats) + "\n")
        with caplog.at_level("WARNING", logger="weaksal.train"):
            out = train.gen_pseudo(weak_ckpt, str(man), str(tmp_path / "pl"))
        assert any("no unlabelled" in r.message for r in caplog.records)
        assert len(pseudolabels.load_pseudo_labels(out)) == len(cats)

    def test_constant_maps_above_threshold_give_all_ones(self):
        image = np.full((3, 32, 32), 0.5, dtype=np.float32)
        maps = np.full((4, 4), 0.6)
        lab = pseudolabels.generate_pseudo_label(image, maps, maps,
                                                 refine=None, threshold=0.5)
        assert np.array_equal(lab.label, np.ones((32, 32), dtype=np.uint8))


class TestTrainSnet:
    def test_runs_and_logs(self, pseudo_dir, tmp_path):
        cfg = micro_config(stage="snet", steps=2)
        path = train.train_snet(cfg, pseudo_dir, str(tmp_path / "s"))
        rows = (tmp_path / "s" / "snet_log.csv").read_text().splitlines()
        assert rows[0] == "step,l_b"
        assert len(rows) == 3
        tensors, hyper = _ckpt_tensors(path)
        assert hyper["stage"] == "snet" and hyper["step"] == 2
        assert any(k.startswith("snet.branch") for k in tensors)

    def test_checkpoint_roundtrip_identical_next_loss(self, pseudo_dir, tmp_path):
        full = train.train_snet(micro_config(stage="snet", steps=2),
                                pseudo_dir, str(tmp_path / "full"))
        one = train.train_snet(micro_config(stage="snet", steps=1),
                               pseudo_dir, str(tmp_path / "part"))
        resumed = train.train_snet(micro_config(stage="snet", steps=2),
                                   pseudo_dir, str(tmp_path / "part"),
                                   resume=one)
        log_full = (tmp_path / "full" / "snet_log.csv").read_text()
        log_part = (tmp_path / "part" / "snet_log.csv").read_text()
        assert log_full == log_part
        tf, _ = _ckpt_tensors(full)
        tr, _ = _ckpt_tensors(resumed)
        for k in tf:
            assert np.array_equal(tf[k], tr[k]), k

    def test_delta_one_matches_plain_cross_entropy_loop(self, pseudo_dir, tmp_path):
        """A delta=1 run replayed by hand with the plain BCE objective."""
        cfg = micro_config(stage="snet", steps=2, delta=1.0)
        train.train_snet(cfg, pseudo_dir, str(tmp_path / "run"))
        logged = [float(r.split(",")[1]) for r in
                  (tmp_path / "run" / "snet_log.csv").read_text().splitlines()[1:]]

        stored = pseudolabels.load_pseudo_labels(pseudo_dir)
        pairs = [(stored[i].provenance["image"], stored[i].label)
                 for i in sorted(stored)]
        snet = train.build_snet(cfg)
        named = {f"snet.{k}": v for k, v in snet.named_params().items()}
        opt = Adam([named[n] for n in sorted(named)], lr=cfg.lr)
        replayed = []
        for step in range(cfg.steps):
            rng = np.random.default_rng([cfg.seed, train.STAGE_IDS["snet"], step])
            idx = rng.choice(len(pairs), size=cfg.batch_size,
                             replace=len(pairs) < cfg.batch_size)
            imgs, masks = [], []
            for i in idx:
                path, label = pairs[int(i)]
                img = data.load_image(path)
                img, label, _ = data.augment_sample(rng, img, mask=label,
                                                    pad=cfg.crop_pad)
                imgs.append(img)
                masks.append(label)
            opt.zero_grad()
            s = snet.forward(Tensor(np.stack(imgs)))
            y = Tensor(np.stack(masks).astype(s.dtype))
            sc = T.clamp_unit(s)
            ce = T.add(T.mul(T.log(sc), y),
                       T.mul(T.log(T.one_minus(sc)), T.one_minus(y)))
            loss = T.mul(ce.mean(), -1.0)
            loss.backward()
            opt.step()
            replayed.append(loss.item())
        assert replayed == pytest.approx(logged, abs=1e-6)

    def test_missing_image_provenance_rejected(self, tmp_path):
        d = tmp_path / "pl"
        d.mkdir()
        from PIL import Image
        Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(d / "x.png")
        (d / "manifest.json").write_text(json.dumps(
            {"x": {"file": "x.png", "provenance": {"fusion": "mean"}}}))
        with pytest.raises(ValueError, match="source image"):
            train.train_snet(micro_config(stage="snet"), str(d),
                             str(tmp_path / "out"))

    def test_empty_pseudo_dir_rejected(self, tmp_path):
        d = tmp_path / "pl"
        d.mkdir()
        (d / "manifest.json").write_text("{}")
        with pytest.raises(ValueError, match="no pseudo labels"):
            train.train_snet(micro_config(stage="snet"), str(d),
                             str(tmp_path / "out"))

    def test_wrong_stage_rejected(self, pseudo_dir, tmp_path):
        with pytest.raises(ValueError, match="stage"):
            train.train_snet(micro_config(stage="weak"), pseudo_dir,
                             str(tmp_path / "out"))


@pytest.fixture(scope="module")
def snet_ckpt(pseudo_dir, tmp_path_factory):
    return train.train_snet(micro_config(stage="snet", steps=2), pseudo_dir,
                            str(tmp_path_factory.mktemp("s")))


class TestEvaluate:
    def test_writes_reports_and_is_deterministic(self, snet_ckpt, manifest,
                                                 tmp_path):
        r1 = train.evaluate(snet_ckpt, manifest, str(tmp_path / "a" / "ev"))
        r2 = train.evaluate(snet_ckpt, manifest, str(tmp_path / "b" / "ev"))
        assert r1.mae == r2.mae and r1.max_f == r2.max_f
        assert np.array_equal(r1.precision, r2.precision)
        for suffix in ("_pr.csv", "_summary.json", "_pr.svg"):
            assert (tmp_path / "a" / f"ev{suffix}").exists()
        summary = json.loads((tmp_path / "a" / "ev_summary.json").read_text())
        assert summary["mae"] == pytest.approx(r1.mae)

    def test_manifest_without_masks_rejected(self, snet_ckpt, dataset, tmp_path):
        root, records = dataset
        man = tmp_path / "nomask.jsonl"
        man.write_text(json.dumps(
            {"image": records[0].image, "source": "unlabelled"}) + "\n")
        with pytest.raises(ValueError, match="ground-truth"):
            train.evaluate(snet_ckpt, str(man), str(tmp_path / "ev"))


class TestInfer:
    def test_png_roundtrip_and_sizes(self, snet_ckpt, dataset, tmp_path):
        root, records = dataset
        paths = [records[0].image, records[5].image]
        outs = train.infer(snet_ckpt, paths, str(tmp_path / "maps"))
        assert [os.path.basename(p) for p in outs] == [
            os.path.basename(q) for q in paths]
        snet, _ = train._snet_from_checkpoint(snet_ckpt)
        for src, out in zip(paths, outs):
            img = data.load_image(src)
            direct = train._forward_snet(snet, img[None])[0]
            written = data.load_saliency(out)
            assert written.shape == img.shape[1:]
            # half a quantization step, plus float32 slack for values that
            # sit within rounding error of a step boundary
            assert np.max(np.abs(written - direct)) <= 1.0 / 510 + 1e-6

    def test_batch_of_one_matches_batch_of_many(self, snet_ckpt, dataset,
                                                tmp_path):
        root, records = dataset
        paths = [r.image for r in records[:3]]
        many = train.infer(snet_ckpt, paths, str(tmp_path / "many"))
        for i, p in enumerate(paths):
            single = train.infer(snet_ckpt, [p], str(tmp_path / f"one{i}"))
            a = open(many[i], "rb").read()
            b = open(single[0], "rb").read()
            assert a == b

    def test_odd_sizes_keep_resolution(self, snet_ckpt, tmp_path):
        rng = np.random.default_rng(3)
        src = tmp_path / "odd.png"
        data.save_image(str(src), rng.uniform(0, 1, (3, 44, 52)))
        outs = train.infer(snet_ckpt, [str(src)], str(tmp_path / "maps"))
        assert data.load_saliency(outs[0]).shape == (44, 52)

    def test_name_collisions_rejected(self, snet_ckpt, dataset, tmp_path):
        root, records = dataset
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir(), b.mkdir()
        import shutil
        shutil.copy(records[0].image, a / "same.png")
        shutil.copy(records[1].image, b / "same.png")
        with pytest.raises(ValueError, match="collide"):
            train.infer(snet_ckpt, [str(a / "same.png"), str(b / "same.png")],
                        str(tmp_path / "maps"))

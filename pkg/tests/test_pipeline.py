import numpy as np
import pytest

from trajvid.data import SceneDistribution, make_dataset
from trajvid.errors import NonFiniteLossError
from trajvid.pipeline import (
    GenerationPipeline,
    make_config,
    pad_onehot,
    records_to_batch,
)
from trajvid.providers import SceneTruthProvider


def _tiny_config(**kw):
    defaults = dict(
        height=16,
        width=16,
        num_frames=4,
        channel_schedule=(6, 8),
        base_channels=6,
        unet_channels=(8, 12, 16),
        num_steps=50,
        sample_steps=10,
        seg_channels=4,
        temb_dim=16,
        batch_size=2,
    )
    defaults.update(kw)
    return make_config(**defaults)


def _tiny_dataset(n=3, seed=0):
    dist = SceneDistribution(height=16, width=16, num_frames=4, max_shapes=1,
                             min_radius=3.0, max_radius=5.0)
    return make_dataset(n, dist, seed=seed)


@pytest.fixture(scope="module")
def tiny_setup():
    config = _tiny_config()
    pipe = GenerationPipeline(config, seed=7)
    ds = _tiny_dataset()
    batch = records_to_batch([ds.record(i) for i in range(2)], config.seg_channels)
    return config, pipe, ds, batch


def test_pad_onehot_layouts():
    seg = np.zeros((2, 4, 4), dtype=np.float32)  # 1 instance + background
    seg[0, :2] = 1.0
    seg[1, 2:] = 1.0
    out = pad_onehot(seg, 4)
    assert out.shape == (4, 4, 4)
    np.testing.assert_array_equal(out[0], seg[0])
    np.testing.assert_array_equal(out[-1], seg[1])
    np.testing.assert_array_equal(out[1:3], 0)


def test_unet_output_shape_and_zero_head(tiny_setup, rng):
    config, pipe, _, _ = tiny_setup
    from trajvid.nn import Tensor

    x = Tensor(rng.standard_normal((2, 3, 3, 16, 16)).astype(np.float32))
    f0 = rng.standard_normal((2, 3, 16, 16)).astype(np.float32)
    out = pipe.unet(x, np.array([1, 5]), f0, None)
    assert out.shape == (2, 3, 3, 16, 16)
    # zero-initialized output head: fresh model predicts exactly zero
    np.testing.assert_array_equal(out.data, np.zeros_like(out.data))


def test_fresh_model_loss_near_one(tiny_setup):
    config, _, _, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=3)
    opt = pipe.make_optimizer("all", lr=0.0)
    rng = np.random.default_rng(0)
    losses = [pipe.train_step(batch, opt, rng) for _ in range(5)]
    assert abs(np.mean(losses) - 1.0) < 0.1


def test_loss_decreases_on_same_batch(tiny_setup):
    config, _, _, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=3)
    opt = pipe.make_optimizer("all", lr=2e-3)
    wins = 0
    for trial in range(10):
        rng = np.random.default_rng(trial)
        first = pipe.train_step(batch, opt, rng)
        rng = np.random.default_rng(trial)
        second = pipe.train_step(batch, opt, rng)
        wins += second <= first + 1e-9
    assert wins >= 8


def test_train_step_determinism(tiny_setup):
    config, _, _, batch = tiny_setup
    a = GenerationPipeline(config, seed=11)
    b = GenerationPipeline(config, seed=11)
    la = a.train_step(batch, a.make_optimizer("all"), np.random.default_rng(5))
    lb = b.train_step(batch, b.make_optimizer("all"), np.random.default_rng(5))
    assert la == lb


def test_frozen_core_bit_identical(tiny_setup):
    config, _, ds, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=9)
    before = {n: p.data.copy() for n, p in pipe.core_parameters()}
    opt = pipe.make_optimizer("conditioning", lr=1e-3)
    rng = np.random.default_rng(1)
    for _ in range(10):
        pipe.train_step(batch, opt, rng, conditioned=True)
    for name, p in pipe.core_parameters():
        np.testing.assert_array_equal(p.data, before[name]), name


def test_gradients_reach_all_trainables(tiny_setup):
    # zero-initialized gates (output head, adapters) block upstream gradients
    # at the exact init point by construction, so take one real step first
    # and assert reach on the second backward pass
    config, _, _, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=13)
    opt = pipe.make_optimizer("all", lr=1e-3)
    rng = np.random.default_rng(2)
    # gates open one per step: output head, then adapters, then the rest
    for _ in range(3):
        pipe.train_step(batch, opt, rng, conditioned=True)
    zero_grads = [
        name
        for name, p in pipe.trainable_parameters("all")
        if p.grad is None or np.linalg.norm(p.grad) == 0
    ]
    assert zero_grads == []


def test_nonfinite_loss_raises(tiny_setup):
    config, _, _, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=1)
    bad = {k: v.copy() for k, v in batch.items()}
    for name, p in pipe.unet.named_parameters():
        if name == "stem.weight":
            p.data = p.data + np.inf
    with pytest.raises(NonFiniteLossError):
        pipe.train_step(bad, pipe.make_optimizer("all"), np.random.default_rng(0))


def test_generate_prepends_frame0_and_is_deterministic(tiny_setup):
    config, pipe, ds, _ = tiny_setup
    record = ds.record(0)
    providers = SceneTruthProvider(np.asarray(record.seg0.data), record.depth0.data)
    video_a = pipe.generate(record.frame0, record.flow_gt, providers, seed=4)
    video_b = pipe.generate(record.frame0, record.flow_gt, providers, seed=4)
    assert video_a.data.shape == (4, 3, 16, 16)
    np.testing.assert_array_equal(video_a.data[0], record.frame0.data)
    np.testing.assert_array_equal(video_a.data, video_b.data)
    video_c = pipe.generate(record.frame0, record.flow_gt, providers, seed=5)
    assert not np.array_equal(video_a.data, video_c.data)


def test_zero_adapters_make_conditioning_inert(tiny_setup):
    config, _, ds, _ = tiny_setup
    pipe = GenerationPipeline(config, seed=21)  # fresh: adapters all zero
    record = ds.record(1)
    providers = SceneTruthProvider(np.asarray(record.seg0.data), record.depth0.data)
    with_cond = pipe.generate(record.frame0, record.flow_gt, providers, seed=8)
    without = pipe.generate(record.frame0, None, providers, seed=8, cond=None)
    assert np.abs(with_cond.data - without.data).max() <= 1e-6


def test_checkpoint_roundtrip_via_pipeline(tiny_setup, tmp_path):
    config, _, ds, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=17)
    opt = pipe.make_optimizer("all", lr=1e-3)
    pipe.train_step(batch, opt, np.random.default_rng(3))
    path = tmp_path / "ckpt.zip"
    pipe.save(path, extra_meta={"step": 1})
    loaded = GenerationPipeline.from_checkpoint(path)
    for (n1, p1), (n2, p2) in zip(pipe.named_parameters(), loaded.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)
    from trajvid.nn.checkpoint import read_manifest

    manifest = read_manifest(path)
    assert manifest["meta"]["ablation_flags"] == {
        "use_segment_feature": True,
        "use_depth_branch": True,
        "use_msf": True,
    }


def test_ablation_configs_run(tiny_setup):
    _, _, ds, _ = tiny_setup
    rows = [
        dict(use_segment_feature=True, use_depth_branch=False, use_msf=False),
        dict(use_segment_feature=False, use_depth_branch=True, use_msf=False),
        dict(use_segment_feature=False, use_depth_branch=True, use_msf=True),
        dict(use_segment_feature=True, use_depth_branch=True, use_msf=False),
    ]
    batchable = [ds.record(i) for i in range(2)]
    for flags in rows:
        config = _tiny_config(**flags)
        pipe = GenerationPipeline(config, seed=2)
        batch = records_to_batch(batchable, config.seg_channels)
        loss = pipe.train_step(batch, pipe.make_optimizer("all", lr=1e-3), np.random.default_rng(0))
        assert np.isfinite(loss)


def test_resume_reproduces_next_loss(tiny_setup, tmp_path):
    config, _, _, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=23)
    opt = pipe.make_optimizer("all", lr=1e-3)
    rng = np.random.default_rng(9)
    pipe.train_step(batch, opt, rng)
    # snapshot the run mid-flight, continue it, then replay from the snapshot
    opt_state = opt.state_dict()
    rng_state = rng.bit_generator.state
    path = tmp_path / "resume.zip"
    pipe.save(path)

    next_direct = pipe.train_step(batch, opt, rng)

    resumed = GenerationPipeline.from_checkpoint(path)
    opt2 = resumed.make_optimizer("all", lr=1e-3)
    opt2.load_state_dict(opt_state)
    rng2 = np.random.default_rng()
    rng2.bit_generator.state = rng_state
    next_resumed = resumed.train_step(batch, opt2, rng2)
    assert next_direct == next_resumed


def test_unet_rejects_mismatched_cond_scale_set(tiny_setup, rng):
    from trajvid.errors import ScaleMismatchError
    from trajvid.nn import Tensor

    config, pipe, _, _ = tiny_setup
    x = Tensor(rng.standard_normal((1, 3, 3, 16, 16)).astype(np.float32))
    f0 = rng.standard_normal((1, 3, 16, 16)).astype(np.float32)
    bad_cond = [Tensor(rng.standard_normal((1, 3, 6, 8, 8)).astype(np.float32))]  # 1 of 2 scales
    with pytest.raises(ScaleMismatchError):
        pipe.unet(x, np.array([1]), f0, bad_cond)


def test_trained_adapters_make_conditioning_matter(tiny_setup):
    from trajvid.providers import SceneTruthProvider

    config, _, ds, batch = tiny_setup
    pipe = GenerationPipeline(config, seed=31)
    rng = np.random.default_rng(4)
    # unconditional warmup first: a zero-init output head on a frozen core
    # would otherwise block every gradient on its way to the adapters
    warm = pipe.make_optimizer("core", lr=5e-3)
    for _ in range(10):
        pipe.train_step(batch, warm, rng, conditioned=False)
    opt = pipe.make_optimizer("conditioning", lr=5e-3)
    for _ in range(30):
        pipe.train_step(batch, opt, rng, conditioned=True)
    record = ds.record(0)
    providers = SceneTruthProvider(np.asarray(record.seg0.data), record.depth0.data)
    with_cond = pipe.generate(record.frame0, record.flow_gt, providers, seed=2)
    without = pipe.generate(record.frame0, None, providers, seed=2, cond=None)
    assert np.abs(with_cond.data - without.data).max() > 1e-4

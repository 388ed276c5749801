import hashlib
import math

import numpy as np
import pytest

from uepcount import (ClassMap, CountCollection, DataError, KernelSpec, LocalCountMap, NoiseModel,
                      ParameterError, collect_counts, compare_strategies, compute_proxies, decode_count_map,
                      encode_class_map, evaluate_counts, iph_ablation, partition_uep, simulate_classifier,
                      synth_annotations, synth_local_counts)
from uepcount.rng import uniforms


def splitmix_oracle(x):
    m = (1 << 64) - 1
    z = (x + 0x9E3779B97F4A7C15) & m
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
    return z ^ (z >> 31)


def uniform_oracle(seed, image_id, cell, lane, stream=0):
    h = int.from_bytes(hashlib.blake2b(image_id.encode(), digest_size=8).digest(), "little")
    key = splitmix_oracle(splitmix_oracle(seed) ^ splitmix_oracle(stream) ^ h)
    return (splitmix_oracle(key ^ splitmix_oracle(cell * 8 + lane)) >> 11) / 2.0 ** 53


def test_uniforms_match_scalar_oracle():
    got = uniforms(42, "img0003", 50, 1, stream=1)
    expect = [uniform_oracle(42, "img0003", c, 1, 1) for c in range(50)]
    assert got.tolist() == expect
    assert np.all((got >= 0) & (got < 1))


def test_uniforms_bad_lane():
    with pytest.raises(ValueError):
        uniforms(0, "a", 3, 8)


def class_map(m=25, shape=(100, 100), seed=0, image_id="c"):
    return ClassMap(image_id, np.random.default_rng(seed).integers(0, m, shape), m)


def test_zero_noise_identity():
    c = class_map()
    assert simulate_classifier(c, NoiseModel("adjacent", 0.0)) == c
    assert simulate_classifier(c, NoiseModel("geometric", 0.0)) == c


def test_noise_deterministic_and_seeded():
    c = class_map()
    a = simulate_classifier(c, NoiseModel("adjacent", 0.3, seed=5))
    b = simulate_classifier(c, NoiseModel("adjacent", 0.3, seed=5))
    d = simulate_classifier(c, NoiseModel("adjacent", 0.3, seed=6))
    assert a == b and a != d


def test_adjacent_flip_fraction_and_step():
    c = class_map(shape=(1000, 1000))
    out = simulate_classifier(c, NoiseModel("adjacent", 0.1, seed=3)).values
    moved = out != c.values
    assert 0.099 <= moved.mean() <= 0.101
    assert np.all(np.abs(out - c.values) <= 1)
    # boundary classes move inward only
    assert np.all(out[c.values == 0] >= 0) and np.all(out[c.values == 24][moved[c.values == 24]] == 23)


def test_geometric_hops():
    c = ClassMap("g", np.full((500, 500), 100), 201)
    out = simulate_classifier(c, NoiseModel("geometric", 1.0, 0.5, seed=1)).values
    h = np.abs(out - 100)
    assert h.min() >= 1
    for k in (1, 2, 3):
        assert np.mean(h == k) == pytest.approx(0.5 ** k, abs=0.01)


def test_noise_model_parse():
    assert NoiseModel.parse("adjacent:0.2", 4) == NoiseModel("adjacent", 0.2, seed=4)
    assert NoiseModel.parse("geometric:0.1:0.3") == NoiseModel("geometric", 0.1, 0.3)
    for bad in ("adjacent", "uniform:0.1", "adjacent:x"):
        with pytest.raises(ParameterError):
            NoiseModel.parse(bad)
    with pytest.raises(ParameterError):
        NoiseModel("adjacent", 1.5)


def test_evaluate_counts_example():
    truth = [LocalCountMap("a", 8, np.array([[5.0]])), LocalCountMap("b", 8, np.array([[1.0]]))]
    pred = [LocalCountMap("b", 8, np.array([[5.0]])), LocalCountMap("a", 8, np.array([[2.0]]))]
    mae, mse = evaluate_counts(pred, truth)
    assert mae == 3.5
    assert mse == pytest.approx(math.sqrt(12.5))
    with pytest.raises(DataError):
        evaluate_counts(pred[:1], truth)


@pytest.fixture(scope="module")
def small_data():
    train = synth_local_counts(synth_annotations(12, seed=1, width=128, height=128), KernelSpec.fixed(4.0), 8)
    ev = synth_local_counts(synth_annotations(4, seed=2, width=128, height=128, prefix="ev"),
                            KernelSpec.fixed(4.0), 8)
    return collect_counts(train), ev


def test_matrix_cell_equals_manual_pipeline(small_data):
    t, ev = small_data
    noise = NoiseModel("adjacent", 0.2)
    cm = compare_strategies(t, ev, 8, noise, strategies=["uep"], proxy_methods=["mcp"], seeds=[7])
    part, _ = partition_uep(t, 8)
    prox = compute_proxies(t, part, "mcp")
    err = []
    for lc in ev:
        noisy = simulate_classifier(encode_class_map(lc, part), NoiseModel("adjacent", 0.2, seed=7))
        err.append(lc.values.sum() - decode_count_map(noisy, prox).values.sum())
    np.testing.assert_allclose(cm["uep", "mcp"].signed[0], err, rtol=0, atol=1e-12)
    assert cm["uep", "mcp"].mae == pytest.approx(np.mean(np.abs(err)))


def test_zero_noise_matches_discretization(small_data):
    t, ev = small_data
    cm = compare_strategies(t, ev[:1], 8, NoiseModel("adjacent", 0.0), seeds=[0, 1])
    for cell in cm.cells.values():
        np.testing.assert_array_equal(cell.signed[0], cell.disc_signed)
        assert cell.mae == pytest.approx(cell.disc_error)
        assert cell.mse >= cell.mae - 1e-12


def test_jobs_do_not_change_results(small_data):
    t, ev = small_data
    noise = NoiseModel("geometric", 0.2, 0.5)
    a = compare_strategies(t, ev, 8, noise, seeds=range(4), jobs=1)
    b = compare_strategies(t, ev, 8, noise, seeds=range(4), jobs=4)
    for key in a.cells:
        assert a[key].signed.tobytes() == b[key].signed.tobytes()


def test_infeasible_strategy_kept(small_data):
    t, ev = small_data
    cm = compare_strategies(t, ev, 100000, NoiseModel(), seeds=[0], strategies=["uep", "uniform-len"])
    assert cm["uep", "mcp"].infeasible
    assert not cm["uniform-len", "mcp"].infeasible


def test_pph_equals_single_head(small_data):
    t, ev = small_data
    r = iph_ablation(t, ev, 8, NoiseModel("adjacent", 0.2), seeds=range(3), mode="pph", shared_noise=True)
    np.testing.assert_allclose(r.double, r.single, rtol=0, atol=1e-12)


def test_iph_zero_noise_accuracy(small_data):
    t, ev = small_data
    r = iph_ablation(t, ev, 8, NoiseModel("adjacent", 0.0), seeds=[0])
    assert r.head0_correct[0] == 1.0 and r.both_correct[0] == 1.0
    with pytest.raises(ParameterError):
        iph_ablation(t, ev, 8, NoiseModel(), mode="triple")


def test_eval_ids_unique(small_data):
    t, ev = small_data
    with pytest.raises(DataError):
        compare_strategies(t, [ev[0], ev[0]], 8, NoiseModel())


def test_paired_seed_fairness():
    # the flip decision of a cell does not depend on the class it holds
    a = ClassMap("img", np.full((50, 50), 5), 12)
    b = ClassMap("img", np.random.default_rng(0).integers(1, 11, (50, 50)), 12)
    noise = NoiseModel("adjacent", 0.3, seed=9)
    moved_a = simulate_classifier(a, noise).values != a.values
    moved_b = simulate_classifier(b, noise).values != b.values
    np.testing.assert_array_equal(moved_a, moved_b)


def test_zero_noise_single_image_mcp_is_exact(small_data):
    _, ev = small_data
    lc = ev[0]
    t = collect_counts([lc])
    cm = compare_strategies(t, [lc], 8, NoiseModel("adjacent", 0.0), proxy_methods=("mcp",), seeds=[0, 1])
    for cell in cm.cells.values():
        assert cell.mae <= 1e-9 * t.K


@pytest.fixture(scope="module")
def scene_sets():
    spec = KernelSpec.fixed(4.0)
    out = []
    for ds in range(3):
        t = collect_counts(synth_local_counts(synth_annotations(64, seed=10 * ds + 1), spec, 8))
        ev = synth_local_counts(synth_annotations(16, seed=10 * ds + 2, prefix="ev"), spec, 8)
        out.append(compare_strategies(t, ev, 25, NoiseModel("adjacent", 0.1), seeds=range(20)))
    return out


def test_uep_contributions_most_uniform(scene_sets):
    for cm in scene_sets:
        cv = {}
        for s in ("uep", "uniform-len", "uniform-num"):
            contrib = cm[s, "mcp"].abs_sum[1:]
            cv[s] = np.std(contrib) / np.mean(contrib)
        assert cv["uep"] < cv["uniform-len"] and cv["uep"] < cv["uniform-num"]


def test_uep_mcp_beats_both_baselines(scene_sets):
    for cm in scene_sets:
        best = cm["uep", "mcp"].mae_per_seed
        for s in ("uniform-len", "uniform-num"):
            for meth in ("mcp", "midpoint"):
                assert np.all(best < cm[s, meth].mae_per_seed)


def test_evaluate_perfect_prediction():
    truth = [LocalCountMap("a", 8, np.array([[1.5, 2.0]]))]
    assert evaluate_counts(truth, truth) == (0.0, 0.0)


def test_iph_zero_noise_is_discretization(small_data):
    t, ev = small_data
    r = iph_ablation(t, ev, 8, NoiseModel("adjacent", 0.0), seeds=[0])
    part, _ = partition_uep(t, 8)
    disc = [lc.values.sum() - decode_count_map(encode_class_map(lc, part), compute_proxies(t, part)).values.sum()
            for lc in ev]
    np.testing.assert_allclose(r.single[0], disc, atol=1e-12)

"""Acceptance suite: one test per release criterion, each printing a
pass/fail line and enforcing its runtime budget.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report lines.
"""

import dataclasses
import itertools
import time

import numpy as np
import pytest

from placemine.descriptors import (
    PatchDescriptorSet,
    cfp_aggregate,
    default_aggregation_params,
    default_softp_params,
    random_mlp,
    softp_modulate,
    variance_shift_estimate,
)
from placemine.evalharness import (
    ItemMeta,
    MatchCriterion,
    RetrievalIndex,
    aid_metric,
    is_match,
    pca_fit,
    pca_project,
    recall_at_n,
)
from placemine.geograph import GraphConfig, extract_clique, rebuild_epoch
from placemine.interact import (
    SegmentLayout,
    encoder_forward,
    random_encoder_params,
    restore_layout,
    segment_and_rearrange,
)
from placemine.pipeline import PipelineConfig, run_epoch_pipeline
from placemine.rng import substream
from placemine.sampler import greedy_expand, sample_clique, seed_scores, select_seed
from placemine.storeio import manifest_to_places
from placemine.synth import SynthConfig, synth_epoch_embeddings, synth_manifest_rows

METERS_PER_DEG = 111194.92664455874


class Budget:
    def __init__(self, label, seconds):
        self.label = label
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is None:
            status = "PASS"
        elif exc_type is not None and issubclass(exc_type, pytest.skip.Exception):
            status = "SKIP"
        else:
            status = "FAIL"
        print(f"[{status}] {self.label} ({elapsed:.2f}s, budget {self.seconds:.0f}s)")
        if exc_type is None:
            assert elapsed < self.seconds, f"{self.label}: {elapsed:.2f}s over budget"
        return False


def meta_at(item_id, x=0.0, y=0.0, **kwargs):
    return ItemMeta(
        item_id, latitude=y / METERS_PER_DEG, longitude=x / METERS_PER_DEG, **kwargs
    )


def recall_fixture():
    """10 queries / 20 database items forcing R@1 = 0.7, R@5 = 0.9."""
    queries, db_vecs, db_meta = [], [], []
    for i in range(10):
        phi = 0.5 * i
        queries.append(
            (np.array([np.cos(phi), np.sin(phi)]), meta_at(f"q{i}", x=10_000.0 * i))
        )
        for dphi, tag in ((0.01, "near"), (0.05, "second")):
            db_vecs.append([np.cos(phi + dphi), np.sin(phi + dphi)])
            hit = (i <= 6 and tag == "near") or (i in (7, 8) and tag == "second")
            x = 10_000.0 * i if hit else 10_000.0 * i + 5_000.0
            y = 0.0 if hit else 3_000.0
            db_meta.append(meta_at(f"d{i}_{tag}", x=x, y=y))
    return queries, RetrievalIndex(np.array(db_vecs), tuple(db_meta))


def test_criterion_01_softp_bounds_and_identity():
    with Budget("1 SoftP bounds & alpha=0 identity", 1.0):
        rng = np.random.default_rng(11)
        params = default_softp_params(seed=1, alpha=1.0)
        zero = default_softp_params(seed=1, alpha=0.0)
        for _ in range(1000):
            x = PatchDescriptorSet(rng.standard_normal((64, 32)))
            _, beta = softp_modulate(x, params)
            assert np.all(beta >= 0.0) and np.all(beta <= params.alpha)
            out, beta0 = softp_modulate(x, zero)
            assert np.array_equal(out.descriptors, x.descriptors)
            assert np.all(beta0 == 0.0)


def test_criterion_02_variance_estimate_first_order():
    with Budget("2 variance estimate gap ~ t^2", 1.0):
        rng = np.random.default_rng(12)
        for _ in range(100):
            mat = rng.standard_normal((16, 8))
            mat -= mat.mean(axis=0)  # negligible-mean-shift regime
            x = PatchDescriptorSet(mat)
            beta = rng.uniform(0, 1, 16)
            ratios = []
            for t in (0.1, 0.05, 0.025):
                exact, est = variance_shift_estimate(x, t * beta)
                ratios.append(abs(exact - est) / t**2)
            assert max(ratios) / min(ratios) < 4.0


def test_criterion_03_aggregation_oracle():
    with Budget("3 bilinear aggregation vs per-patch loop", 1.0):
        rng = np.random.default_rng(13)
        for trial in range(100):
            patches = int(rng.integers(1, 17))
            dim = int(rng.integers(1, 9))
            params = default_aggregation_params(
                dim, compress_dim=3, probe_dim=2, token_dim=None, seed=trial
            )
            mat = rng.standard_normal((patches, dim))
            out = cfp_aggregate(PatchDescriptorSet(mat), None, params)
            acc = np.zeros((3, 2))
            for i in range(patches):
                acc += np.outer(
                    params.compress.apply(mat[i : i + 1])[0],
                    params.probe.apply(mat[i : i + 1])[0],
                )
            acc /= patches
            np.testing.assert_allclose(out.vector, acc.ravel(), rtol=1e-6, atol=1e-9)


def test_criterion_04_greedy_sampler_oracle():
    with Budget("4 greedy expansion vs exhaustive argmax", 5.0):
        # worked 5-node example, independently re-derived
        w = np.zeros((5, 5))
        pairs = {
            (0, 1): -1, (0, 2): -5, (0, 3): -4, (0, 4): -9, (1, 2): -2,
            (1, 3): -8, (1, 4): -7, (2, 3): -3, (2, 4): -6, (3, 4): -10,
        }
        for (i, j), v in pairs.items():
            w[i, j] = w[j, i] = v
        np.testing.assert_allclose(seed_scores(w), [-4.75, -4.5, -4.0, -6.25, -8.0])
        seed = select_seed(seed_scores(w))
        assert seed == 2
        assert greedy_expand(w, seed, 4) == [2, 1, 0, 3]

        rng = np.random.default_rng(14)
        for _ in range(200):
            n = int(rng.integers(2, 13))
            w = -rng.uniform(0.0, 10.0, (n, n))
            w = (w + w.T) / 2
            np.fill_diagonal(w, 0.0)
            k = int(rng.integers(1, n + 1))
            seed = select_seed(seed_scores(w))
            order = greedy_expand(w, seed, k)
            members = [seed]
            for step in range(1, k):
                best, best_mean = None, -np.inf
                for v in range(n):
                    if v not in members:
                        mean = w[members, v].mean()
                        if mean > best_mean:  # strict: ties keep lowest index
                            best, best_mean = v, mean
                assert order[step] == best
                members.append(best)


def test_criterion_05_scale_invariance():
    with Budget("5 scale invariance of seed and expansion", 2.0):
        rng = np.random.default_rng(15)
        for _ in range(1000):
            n = int(rng.integers(2, 10))
            w = -rng.uniform(0.0, 5.0, (n, n))
            w = (w + w.T) / 2
            np.fill_diagonal(w, 0.0)
            c = float(rng.uniform(1e-3, 1e3))
            seed = select_seed(seed_scores(w))
            assert select_seed(seed_scores(c * w)) == seed
            assert greedy_expand(c * w, seed, n) == greedy_expand(w, seed, n)
            # Eq-form equivalence: argmax of the mean equals argmax of the sum
            assert select_seed(w.sum(axis=1)) == seed


def test_criterion_06_clique_extraction_oracle():
    with Budget("6 clique extraction vs exhaustive enumeration", 30.0):
        rng = np.random.default_rng(16)
        for trial in range(200):
            n = int(rng.integers(4, 16))
            density = rng.uniform(0.2, 0.8)
            adj = rng.random((n, n)) < density
            adj = np.triu(adj, 1)
            adj = adj | adj.T
            min_size = int(rng.integers(3, 7))
            found = extract_clique(adj, min_size, substream(17, "acc", trial))
            exists = any(
                all(adj[i, j] for i, j in itertools.combinations(subset, 2))
                for subset in itertools.combinations(range(n), min_size)
            )
            assert (found is not None) == exists
            if found is not None:
                assert len(found) >= min_size
                for i, j in itertools.combinations(found, 2):
                    assert adj[i, j]


def test_criterion_07_recall_fixture():
    with Budget("7 recall fixture R@1=0.7 R@5=0.9 + monotonicity", 1.0):
        queries, index = recall_fixture()
        recalls = recall_at_n(queries, index, MatchCriterion.radius(25.0), [1, 5, 10])
        assert recalls[1] == pytest.approx(0.7)
        assert recalls[5] == pytest.approx(0.9)
        rng = np.random.default_rng(18)
        for _ in range(5):
            db = rng.standard_normal((20, 4))
            db /= np.linalg.norm(db, axis=1, keepdims=True)
            idx = RetrievalIndex(
                db, tuple(meta_at(f"d{k}", x=float(rng.uniform(0, 100))) for k in range(20))
            )
            qs = []
            for k in range(10):
                v = rng.standard_normal(4)
                qs.append((v / np.linalg.norm(v), meta_at(f"q{k}", x=float(rng.uniform(0, 100)))))
            r = recall_at_n(qs, idx, MatchCriterion.radius(40.0), [1, 5, 10])
            assert r[1] <= r[5] <= r[10]


def test_criterion_08_protocol_boundaries():
    with Budget("8 protocol boundary cases", 1.0):
        r25 = MatchCriterion.radius(25.0)
        assert is_match(meta_at("q"), meta_at("d", x=25.0), r25)
        assert not is_match(meta_at("q"), meta_at("d", x=26.0), r25)

        az = MatchCriterion.radius_azimuth(25.0, 40.0)
        q = meta_at("q", azimuth_deg=0.0)
        assert is_match(q, meta_at("d", x=10.0, azimuth_deg=350.0), az)

        fr = MatchCriterion.frame_offset(10)
        assert is_match(ItemMeta("q", frame_idx=100), ItemMeta("d", frame_idx=110), fr)
        assert not is_match(ItemMeta("q", frame_idx=100), ItemMeta("d", frame_idx=111), fr)

        up = MatchCriterion.unique_pair()
        assert is_match(ItemMeta("q", pair_id="d1"), ItemMeta("d1"), up)
        assert not is_match(ItemMeta("q", pair_id="d1"), ItemMeta("d2"), up)


def test_criterion_09_aid():
    with Budget("9 intra-class distance metric", 1.0):
        ids, aid = aid_metric({"a": np.ones((5, 3)), "b": np.zeros((4, 3))})
        assert aid == 0.0
        ids, _ = aid_metric({"a": np.array([[0.0, 0.0], [2.0, 0.0]])})
        assert ids["a"] == pytest.approx(1.0)
        rng = np.random.default_rng(19)
        feats = rng.standard_normal((8, 5))
        _, before = aid_metric({"a": feats})
        _, after = aid_metric({"a": feats + rng.standard_normal(5)})
        assert before == pytest.approx(after)


def test_criterion_10_pca_isometry():
    with Budget("10 full-dimension PCA leaves recall unchanged", 1.0):
        queries, index = recall_fixture()
        crit = MatchCriterion.radius(25.0)
        before = recall_at_n(queries, index, crit, [1, 5, 10])
        model = pca_fit(index.descriptors, index.descriptors.shape[1])
        gram = model.components @ model.components.T
        np.testing.assert_allclose(gram, np.eye(model.output_dim), atol=1e-6)
        db_p = pca_project(model, index.descriptors)
        q_p = [(pca_project(model, v)[0], m) for v, m in queries]
        after = recall_at_n(q_p, RetrievalIndex(db_p, index.metadata), crit, [1, 5, 10])
        assert before == after


def test_criterion_11_encoder_properties():
    with Budget("11 encoder attention / equivariance / layout", 2.0):
        assert SegmentLayout.for_descriptor(8448, 768).segment_count == 11
        layout = SegmentLayout(4, 16)
        params = random_encoder_params(model_dim=16, head_count=4, ff_dim=32, seed=20)
        rng = np.random.default_rng(21)
        mat = rng.standard_normal((6, 64))
        seqs = segment_and_rearrange(mat, layout)
        assert np.array_equal(restore_layout(seqs, layout), mat)  # bitwise

        out, attn = encoder_forward(seqs, params, return_attention=True)
        for per_seq in attn:
            for weights in per_seq:
                np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-6)
        perm = rng.permutation(6)
        out_perm = encoder_forward(seqs[:, perm, :], params)
        np.testing.assert_allclose(out[:, perm, :], out_perm, atol=1e-5)


DRIFT_SYNTH = SynthConfig(
    cities=4, clusters_per_city=30, images_per_cluster=6,
    cluster_spacing=20.0, descriptor_dim=16, noise_sigma=0.2, master_seed=22,
)


def _edge_ids(graphs):
    return {
        tuple(sorted((g.nodes[i], g.nodes[j]))) for g in graphs for (i, j) in g.edges
    }


def test_criterion_12_dynamic_graph_behavior():
    with Budget("12 drift-off graphs frozen, drift-on edges move", 30.0):
        places = manifest_to_places(synth_manifest_rows(DRIFT_SYNTH))
        gcfg = GraphConfig(tau_geo=75.0)

        frozen = dataclasses.replace(DRIFT_SYNTH, drift_rate=0.0)
        control = [
            rebuild_epoch(
                places, synth_epoch_embeddings(frozen, e), gcfg, 42, e,
                graphs_per_epoch=4, stream_epoch=0,
            )
            for e in range(5)
        ]
        for e in range(4):
            for a, b in zip(control[e], control[e + 1]):
                assert a.nodes == b.nodes
                assert a.edges == b.edges
                assert np.array_equal(a.weights, b.weights)

        drifting = dataclasses.replace(DRIFT_SYNTH, drift_rate=0.1)
        runs = [
            rebuild_epoch(
                places, synth_epoch_embeddings(drifting, e), gcfg, 42, e,
                graphs_per_epoch=4, stream_epoch=0,
            )
            for e in range(5)
        ]
        for e in range(4):
            a, b = _edge_ids(runs[e]), _edge_ids(runs[e + 1])
            jaccard = len(a & b) / len(a | b)
            assert jaccard < 1.0


def test_criterion_13_hardness_concentration():
    with Budget("13 greedy cliques harder than random subsets", 60.0):
        places = manifest_to_places(synth_manifest_rows(DRIFT_SYNTH))
        gcfg = GraphConfig(tau_geo=75.0)
        drifting = dataclasses.replace(DRIFT_SYNTH, drift_rate=0.1)
        rng = np.random.default_rng(23)
        wins = trials = 0
        epoch = 0
        while trials < 100:
            graphs = rebuild_epoch(
                places, synth_epoch_embeddings(drifting, epoch), gcfg, 99, epoch,
                graphs_per_epoch=4,
            )
            for g in graphs:
                if trials >= 100:
                    break
                greedy = sample_clique(g, 4)
                random_means = []
                for _ in range(20):
                    idx = rng.choice(g.node_count, 4, replace=False)
                    sub = g.weights[np.ix_(idx, idx)]
                    random_means.append(sub.sum() / 12)
                trials += 1
                if greedy.mean_internal_affinity >= np.mean(random_means):
                    wins += 1
            epoch += 1
        assert wins >= 95, f"greedy won only {wins}/100 trials"


def test_criterion_14_end_to_end_determinism(tmp_path):
    with Budget("14 pipeline re-run byte-identical", 60.0):
        config = PipelineConfig.from_mapping(
            {
                "cities": "3", "clusters_per_city": "25", "images_per_cluster": "3",
                "cluster_spacing": "20.0", "descriptor_dim": "16",
                "noise_sigma": "0.2", "drift_rate": "0.1", "tau_geo": "75.0",
                "graphs_per_epoch": "4", "batches_per_epoch": "2",
                "cliques_per_batch": "2", "sources": "synth_a,synth_b",
            }
        )
        run_epoch_pipeline(config, 2, 314, tmp_path / "run1")
        run_epoch_pipeline(config, 2, 314, tmp_path / "run2")
        names = [
            "batches.epoch0.txt", "batches.epoch1.txt", "report.json",
            "synth_a.manifest.csv", "synth_a.epoch0.bin", "synth_b.epoch1.bin",
        ]
        for name in names:
            assert (tmp_path / "run1" / name).read_bytes() == (
                tmp_path / "run2" / name
            ).read_bytes(), name


def test_criterion_15_exporter_round_trip(tmp_path):
    with Budget("15 exporter output passes store validation", 60.0):
        frontend = pytest.importorskip(
            "embed_export", reason="exporter package not installed"
        )
        from placemine.storeio import read_manifest_csv, read_named_stores, read_store

        from PIL import Image

        rng = np.random.default_rng(24)
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        rows = []
        for i in range(3):
            arr = rng.integers(0, 255, size=(48, 64, 3), dtype=np.uint8)
            Image.fromarray(arr).save(img_dir / f"img{i}.png")
            rows.append({"id": f"img{i}", "lat": f"{i * 1e-4}", "lon": "0.0"})
        meta_csv = tmp_path / "meta.csv"
        meta_csv.write_text(
            "id,lat,lon\n" + "".join(f"{r['id']},{r['lat']},{r['lon']}\n" for r in rows)
        )
        job = frontend.ExportJob(
            image_dir=img_dir, metadata_csv=meta_csv,
            backbone="patchstats", resize_edge=64,
            output_prefix=tmp_path / "export",
        )
        result = frontend.export_embeddings(job)

        # both files must pass the consumer's own format validation
        sections = read_named_stores(result.patch_store)
        token = read_store(result.token_store)
        manifest = read_manifest_csv(result.manifest)
        assert token.shape[0] == len(manifest) == 3
        for row in manifest:
            patches = sections[row["id"]]
            assert patches.ndim == 2 and np.all(np.isfinite(patches))
            assert np.all(np.isfinite(sections[f"{row['id']}.token"]))
        assert np.all(np.isfinite(token))

        # spot-check row alignment by re-embedding one named image
        single = frontend.embed_single(
            img_dir / "img1.png", backbone="patchstats", resize_edge=64
        )
        row = [m["id"] for m in manifest].index("img1")
        np.testing.assert_allclose(token[row], single.token, atol=1e-5)
        np.testing.assert_allclose(sections["img1"], single.patches, atol=1e-5)

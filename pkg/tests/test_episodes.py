"""Episode sampling and the synthetic task generator."""

import numpy as np
import pytest

from selfshot import (
    EpisodeError,
    TaskSpec,
    l2_normalize,
    prototype_init,
    predict_proba,
    sample_episode,
    synth_gaussian_tasks,
)

from conftest import make_set


def grid_set(n_classes=6, per_class=10, dim=3):
    rng = np.random.default_rng(100)
    feats = rng.normal(size=(n_classes * per_class, dim))
    labels = np.repeat(np.arange(n_classes), per_class)
    return make_set(feats, labels)


class TestTaskSpec:
    def test_defaults(self):
        spec = TaskSpec()
        assert (spec.n_way, spec.k_shot, spec.q_per_class) == (5, 1, 15)
        assert spec.mode == "transductive"

    def test_rows_needed_transductive(self):
        # queries double as the unlabeled set; u_per_class is not consumed
        spec = TaskSpec(n_way=5, k_shot=1, q_per_class=15, u_per_class=50)
        assert spec.rows_needed_per_class() == 16

    def test_rows_needed_semi(self):
        spec = TaskSpec(mode="semi", k_shot=1, q_per_class=15, u_per_class=50)
        assert spec.rows_needed_per_class() == 66

    def test_rejects_bad_mode(self):
        with pytest.raises(EpisodeError):
            TaskSpec(mode="inductive")

    def test_rejects_nonpositive_way(self):
        with pytest.raises(EpisodeError):
            TaskSpec(n_way=0)


class TestSampleEpisode:
    def test_transductive_unlabeled_is_query(self):
        es = grid_set()
        spec = TaskSpec(n_way=3, k_shot=2, q_per_class=4)
        ep = sample_episode(np.random.default_rng(0), es, spec)
        np.testing.assert_array_equal(ep.unlabeled_indices, ep.query_indices)
        np.testing.assert_array_equal(ep.unlabeled_labels, ep.query_labels)

    def test_semi_pools_disjoint(self):
        es = grid_set(per_class=12)
        spec = TaskSpec(n_way=3, k_shot=2, q_per_class=4, u_per_class=5, mode="semi")
        ep = sample_episode(np.random.default_rng(1), es, spec)
        s, q, u = map(set, (ep.support_indices, ep.query_indices, ep.unlabeled_indices))
        assert not (s & q) and not (s & u) and not (q & u)
        assert len(u) == 15

    def test_counts_and_label_remap(self):
        es = grid_set()
        spec = TaskSpec(n_way=4, k_shot=3, q_per_class=2)
        ep = sample_episode(np.random.default_rng(2), es, spec)
        assert ep.support_indices.shape == (12,)
        assert ep.query_indices.shape == (8,)
        # labels are remapped to 0..n_way-1 in class_ids order
        np.testing.assert_array_equal(np.unique(ep.support_labels), np.arange(4))
        for pos, cls in enumerate(ep.class_ids):
            rows = ep.support_indices[ep.support_labels == pos]
            assert np.all(es.labels[rows] == cls)

    def test_exhausts_tiny_population(self):
        # 2 classes x 2 rows, N=2 K=1 Q=1 uses every row exactly once
        feats = np.arange(8, dtype=np.float64).reshape(4, 2)
        es = make_set(feats, [0, 0, 1, 1])
        spec = TaskSpec(n_way=2, k_shot=1, q_per_class=1)
        ep = sample_episode(np.random.default_rng(3), es, spec)
        used = np.concatenate([ep.support_indices, ep.query_indices])
        assert sorted(used.tolist()) == [0, 1, 2, 3]

    def test_insufficient_rows_rejected(self):
        es = grid_set(per_class=5)
        spec = TaskSpec(n_way=3, k_shot=2, q_per_class=9)
        with pytest.raises(EpisodeError, match="11"):
            sample_episode(np.random.default_rng(4), es, spec)

    def test_too_few_classes_rejected(self):
        es = grid_set(n_classes=3)
        with pytest.raises(EpisodeError):
            sample_episode(np.random.default_rng(5), es, TaskSpec(n_way=5))

    def test_deterministic_given_rng_state(self):
        es = grid_set()
        spec = TaskSpec(n_way=3, k_shot=1, q_per_class=2)
        a = sample_episode(np.random.default_rng(6), es, spec)
        b = sample_episode(np.random.default_rng(6), es, spec)
        np.testing.assert_array_equal(a.support_indices, b.support_indices)
        np.testing.assert_array_equal(a.query_indices, b.query_indices)

    def test_class_choice_roughly_uniform(self):
        es = grid_set(n_classes=8)
        spec = TaskSpec(n_way=2, k_shot=1, q_per_class=1)
        rng = np.random.default_rng(7)
        counts = np.zeros(8)
        for _ in range(600):
            ep = sample_episode(rng, es, spec)
            counts[list(ep.class_ids)] += 1
        # every class drawn, none dominating
        assert counts.min() > 0.5 * counts.mean()
        assert counts.max() < 1.5 * counts.mean()


class TestSynthGenerator:
    def test_shapes_and_metadata(self):
        es = synth_gaussian_tasks(np.random.default_rng(0), n_classes=4, dim=6, per_class=9)
        assert es.features.shape == (36, 6)
        assert es.n_classes == 4
        assert len(es.class_names) == 4
        assert es.ids is not None and len(es.ids) == 36

    def test_centers_on_separation_sphere(self):
        sep = 2.75
        es = synth_gaussian_tasks(
            np.random.default_rng(1), n_classes=6, dim=8, separation=sep,
            spread=1e-9, per_class=3,
        )
        # with negligible spread every row sits on its center
        norms = np.linalg.norm(es.features, axis=1)
        np.testing.assert_allclose(norms, sep, rtol=1e-6)

    def test_seed_determinism(self):
        a = synth_gaussian_tasks(np.random.default_rng(2))
        b = synth_gaussian_tasks(np.random.default_rng(2))
        np.testing.assert_array_equal(a.features, b.features)

    def test_zero_separation_is_chance(self):
        es = synth_gaussian_tasks(
            np.random.default_rng(3), n_classes=8, dim=5, separation=0.0, per_class=30,
        )
        spec = TaskSpec(n_way=5, k_shot=1, q_per_class=10)
        rng = np.random.default_rng(4)
        accs = []
        for _ in range(40):
            ep = sample_episode(rng, es, spec)
            clf = prototype_init(es.features[ep.support_indices], ep.support_labels, 5)
            pred = predict_proba(clf, es.features[ep.query_indices]).argmax(axis=1)
            accs.append(float(np.mean(pred == ep.query_labels)))
        assert abs(np.mean(accs) - 0.2) < 0.06

    def test_wide_separation_is_easy(self):
        es = l2_normalize(synth_gaussian_tasks(
            np.random.default_rng(5), n_classes=8, dim=10, separation=6.0,
            spread=1.0, per_class=30,
        ))
        spec = TaskSpec(n_way=5, k_shot=5, q_per_class=10)
        rng = np.random.default_rng(6)
        correct = total = 0
        for _ in range(30):
            ep = sample_episode(rng, es, spec)
            clf = prototype_init(es.features[ep.support_indices], ep.support_labels, 5)
            pred = predict_proba(clf, es.features[ep.query_indices]).argmax(axis=1)
            correct += int(np.sum(pred == ep.query_labels))
            total += ep.query_labels.size
        assert correct / total >= 0.999

    def test_rejects_bad_params(self):
        with pytest.raises(EpisodeError):
            synth_gaussian_tasks(np.random.default_rng(0), n_classes=0)
        with pytest.raises(EpisodeError):
            synth_gaussian_tasks(np.random.default_rng(0), spread=-1.0)

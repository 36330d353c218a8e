"""Question attention and the four representation-integration back-ends."""
import numpy as np
import pytest

from livlr.davl import (
    RepresentationBundle,
    RiVariant,
    SOURCE_NAMES,
    apply_index_embedding,
    create_davl_params,
    integrate,
    question_attention,
)
from livlr.errors import ConfigError, ShapeError
from livlr.optim import ParamStore
from livlr.tensor import Tensor, backward, constant, no_grad, sum_all

from oracles import (
    davl_loop,
    max_rel_err,
    mean_rows_loop,
    question_attention_loop,
    softmax_loop,
)


def make_params(rng, d=6, n_heads=2, n_keep=2, variant=RiVariant.DAVL, normalize=True):
    store = ParamStore()
    params = create_davl_params(
        store, rng, d=d, n_heads=n_heads, n_keep=n_keep,
        variant=variant, dtype=np.float64, normalize=normalize,
    )
    return store, params


def head_arrays(block):
    return [(h.w_q.data, h.w_k.data, h.w_v.data, h.w_o.data) for h in block.heads]


def random_bundle(rng, d=6, rows=(2, 3, 2, 2)):
    mats = [Tensor(rng.standard_normal((r, d))) for r in rows]
    return RepresentationBundle(*mats)


class TestQuestionAttention:
    def test_matches_loop_oracle(self):
        for seed in range(20):
            rng = np.random.default_rng([301, seed])
            d = 6
            n_heads = int(rng.choice([1, 2, 3]))
            store, params = make_params(rng, d=d, n_heads=n_heads)
            block = params.qatt[SOURCE_NAMES[0]]
            n, t = int(rng.integers(1, 5)), int(rng.integers(1, 6))
            x = constant(rng.standard_normal((n, d)), np.float64)
            q = constant(rng.standard_normal((t, d)), np.float64)
            got = question_attention(block, x, q).data
            want = question_attention_loop(x.data, q.data, head_arrays(block))
            assert got.shape == (n, d)
            assert max_rel_err(got, want) <= 1e-6

    def test_single_question_token_ignores_x_content(self):
        # one key-value row: attention weight is 1 whatever the score, so
        # every output row is the same function of q alone
        rng = np.random.default_rng(302)
        store, params = make_params(rng)
        block = params.qatt[SOURCE_NAMES[0]]
        q = constant(rng.standard_normal((1, 6)), np.float64)
        a = question_attention(block, constant(rng.standard_normal((3, 6)), np.float64), q).data
        b = question_attention(block, constant(rng.standard_normal((3, 6)), np.float64), q).data
        assert np.allclose(a, b, atol=1e-12)
        assert np.allclose(a[0], a[1], atol=1e-12)

    def test_zero_question_gives_zero_output(self):
        rng = np.random.default_rng(303)
        store, params = make_params(rng)
        block = params.qatt[SOURCE_NAMES[1]]
        x = constant(rng.standard_normal((2, 6)), np.float64)
        q = constant(np.zeros((4, 6)), np.float64)
        out = question_attention(block, x, q).data
        assert np.array_equal(out, np.zeros((2, 6)))


class TestIndexEmbedding:
    def test_scales_rows_by_source(self):
        idx = Tensor(np.arange(1.0, 9.0).reshape(4, 2))
        nodes = Tensor(np.ones((5, 2)))
        out = apply_index_embedding(idx, nodes, [1, 1, 2, 4, 3])
        want = np.array([[1, 2], [1, 2], [3, 4], [7, 8], [5, 6]], dtype=float)
        assert np.array_equal(out.data, want)

    def test_bad_rows_rejected(self):
        idx = Tensor(np.ones((4, 2)))
        with pytest.raises(ShapeError):
            apply_index_embedding(idx, Tensor(np.ones((3, 2))), [1, 2])

    def test_bad_ids_rejected(self):
        idx = Tensor(np.ones((4, 2)))
        with pytest.raises(ConfigError):
            apply_index_embedding(idx, Tensor(np.ones((2, 2))), [0, 1])
        with pytest.raises(ConfigError):
            apply_index_embedding(idx, Tensor(np.ones((2, 2))), [1, 5])


class TestBundle:
    def test_sources_follow_row_counts(self):
        rng = np.random.default_rng(304)
        b = random_bundle(rng, rows=(1, 2, 3, 1))
        assert b.sources().tolist() == [1, 2, 2, 3, 3, 3, 4]


class TestIntegrate:
    def test_davl_matches_full_composition_oracle(self):
        for seed in range(20):
            rng = np.random.default_rng([311, seed])
            d = 6
            store, params = make_params(rng, d=d, n_heads=2, n_keep=2)
            bundle = random_bundle(rng, d=d)
            q = constant(rng.standard_normal((3, d)), np.float64)
            # make the index rows non-trivial so the scaling path is live
            params.index_matrix.data[...] = rng.uniform(0.5, 1.5, (4, d))
            got = integrate(params, bundle, q).data
            want = davl_loop(
                [m.data for m in bundle.matrices()],
                q.data,
                [head_arrays(params.qatt[s]) for s in SOURCE_NAMES],
                params.index_matrix.data,
                params.learn_w1.data,
                params.learn_w2.data,
                params.w_gcn.data,
                n_keep=2,
            )
            assert max_rel_err(got, want) <= 1e-6

    def test_ri_gcn_is_davl_without_index_scaling(self):
        rng = np.random.default_rng(312)
        d = 6
        store_d, p_d = make_params(rng, d=d, variant=RiVariant.DAVL)
        rng2 = np.random.default_rng(313)
        store_g, p_g = make_params(rng2, d=d, variant=RiVariant.RI_GCN)
        # align shared parameters, leave the ones-initialised index matrix
        for name in store_g.names():
            p_d_t = store_d[name]
            p_d_t.data[...] = store_g[name].data
        bundle = random_bundle(rng, d=d)
        q = constant(np.random.default_rng(314).standard_normal((3, d)), np.float64)
        with no_grad():
            a = integrate(p_d, bundle, q)
            b = integrate(p_g, bundle, q)
        assert a.data.tobytes() == b.data.tobytes()

    def test_ri_concat_is_affine_of_pooled_sources(self):
        rng = np.random.default_rng(315)
        d = 6
        store, params = make_params(rng, d=d, variant=RiVariant.RI_CONCAT)
        bundle = random_bundle(rng, d=d)
        q = constant(rng.standard_normal((3, d)), np.float64)
        got = integrate(params, bundle, q).data
        pooled = []
        for name, m in zip(SOURCE_NAMES, bundle.matrices()):
            att = question_attention_loop(m.data, q.data, head_arrays(params.qatt[name]))
            pooled.append(mean_rows_loop(att))
        flat = np.concatenate(pooled)
        want = flat @ params.w_concat.data + params.b_concat.data
        assert max_rel_err(got, want) <= 1e-6

    def test_ri_at_matches_co_attention_loop(self):
        rng = np.random.default_rng(316)
        d = 6
        store, params = make_params(rng, d=d, variant=RiVariant.RI_AT)
        bundle = random_bundle(rng, d=d)
        q = constant(rng.standard_normal((3, d)), np.float64)
        got = integrate(params, bundle, q).data

        att = [
            question_attention_loop(m.data, q.data, head_arrays(params.qatt[s]))
            for s, m in zip(SOURCE_NAMES, bundle.matrices())
        ]
        nodes = np.concatenate(att, axis=0)
        n = nodes.shape[0]
        p = nodes @ params.learn_w1.data
        k = nodes @ params.learn_w2.data
        scores = p @ k.T
        out = np.zeros_like(nodes)
        for i in range(n):
            mask = [j != i for j in range(n)]
            beta = softmax_loop(scores[i], mask)
            out[i] = nodes[i] + sum(beta[j] * nodes[j] for j in range(n))
        want = mean_rows_loop(out)
        assert max_rel_err(got, want) <= 1e-6

    def test_every_variant_returns_vector_and_gradients_flow(self):
        for variant in RiVariant:
            rng = np.random.default_rng(317)
            store, params = make_params(rng, variant=variant)
            bundle = random_bundle(rng)
            q = constant(rng.standard_normal((3, 6)), np.float64)
            store.zero_grads()
            out = integrate(params, bundle, q)
            assert out.data.shape == (6,)
            backward(sum_all(out))
            grads = sum(float(np.abs(p.grad).sum()) for _, p in store.items())
            assert grads > 0.0, variant

    def test_head_count_must_divide_width(self):
        store = ParamStore()
        with pytest.raises(ConfigError):
            create_davl_params(
                store, np.random.default_rng(0), d=6, n_heads=4, n_keep=2,
                variant=RiVariant.DAVL, dtype=np.float64,
            )

    def test_variant_parameter_sets(self):
        expect_extra = {
            RiVariant.DAVL: {"davl.index_embedding", "davl.learner.w1", "davl.learner.w2", "davl.gcn.w"},
            RiVariant.RI_GCN: {"davl.learner.w1", "davl.learner.w2", "davl.gcn.w"},
            RiVariant.RI_AT: {"davl.learner.w1", "davl.learner.w2"},
            RiVariant.RI_CONCAT: {"davl.concat.w", "davl.concat.b"},
        }
        for variant, extra in expect_extra.items():
            rng = np.random.default_rng(1)
            store, _ = make_params(rng, variant=variant)
            names = set(store.names())
            non_qatt = {n for n in names if ".qatt." not in n}
            assert non_qatt == extra, variant

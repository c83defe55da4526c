import numpy as np
import pytest

from tactisim.contact import ContactVector
from tactisim.dynamics import IcosahedronFrame, InertialParams, MavState
from tactisim.impulse import (ImpactSample, RestitutionParams, beam_normal,
                              collision_delta, fit_restitution_friction,
                              load_impact_csv, predicted_post_velocity,
                              save_impact_csv, vertex_impulse)
from tactisim.so3 import random_rotation

FRAME = IcosahedronFrame()


def apply_impulse(state: MavState, frame, i, j, inertial):
    """Independent rigid-body impulse map (test-side oracle).

    v+ = v + j/m;  w+_world = w_world + Iw^-1 (rho x j), Iw = R I R^T.
    Returns the post-impact world velocity of vertex i.
    """
    R = state.R
    rho = R @ frame.vertices[i]
    Iw_inv = R @ np.linalg.inv(inertial.inertia) @ R.T
    v_post = state.v + j / inertial.mass
    w_world_post = R @ state.w + Iw_inv @ np.cross(rho, j)
    return v_post + np.cross(w_world_post, rho)


def vertex_velocity_world(state, frame, i):
    rho = state.R @ frame.vertices[i]
    return state.v + np.cross(state.R @ state.w, rho)


class TestBeamNormal:
    def test_identity_rotation(self):
        for i in range(12):
            n = beam_normal(FRAME, i, np.eye(3))
            assert np.allclose(n, -FRAME.axes[i])
            assert np.isclose(np.linalg.norm(n), 1.0)

    def test_antipodal_opposite(self):
        for i in range(12):
            j = next(k for k in range(12)
                     if np.allclose(FRAME.vertices[k], -FRAME.vertices[i]))
            assert np.allclose(beam_normal(FRAME, i, np.eye(3)),
                               -beam_normal(FRAME, j, np.eye(3)))

    def test_rotates_with_attitude(self):
        rng = np.random.default_rng(4)
        R = random_rotation(rng)
        for i in range(12):
            assert np.allclose(beam_normal(FRAME, i, R),
                               R @ beam_normal(FRAME, i, np.eye(3)))

    def test_index_range(self):
        with pytest.raises(IndexError):
            beam_normal(FRAME, 12, np.eye(3))


class TestVertexImpulse:
    def test_elastic_head_on(self):
        # m=1, e=1, mu=0, central impact along the beam: j = 2 n
        inertial = InertialParams(mass=1.0)
        params = RestitutionParams(restitution=1.0, friction=0.0)
        i = 0
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=-n)     # vertex closing at 1 m/s along the beam
        j = vertex_impulse(state, FRAME, i, n, params, inertial)
        assert np.allclose(j, 2.0 * n, atol=1e-12)
        v_post = apply_impulse(state, FRAME, i, j, inertial)
        assert np.isclose(n @ v_post, 1.0, atol=1e-12)

    def test_plastic_head_on(self):
        inertial = InertialParams(mass=1.0)
        params = RestitutionParams(restitution=0.0, friction=0.0)
        i = 0
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=-n)
        j = vertex_impulse(state, FRAME, i, n, params, inertial)
        v_post = apply_impulse(state, FRAME, i, j, inertial)
        assert np.isclose(n @ v_post, 0.0, atol=1e-12)

    def test_separating_returns_zero(self):
        inertial = InertialParams()
        params = RestitutionParams()
        i = 4
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=n)      # moving away from the surface
        assert np.allclose(
            vertex_impulse(state, FRAME, i, n, params, inertial), 0.0)

    @pytest.mark.parametrize("mu", [0.0, 0.4, 1.0])
    def test_restitution_identity_off_center_spinning(self, mu):
        # n.v+ = -e n.v- evaluated through the independent impulse map;
        # exact for beam normals because rho x n = 0 decouples friction
        rng = np.random.default_rng(17)
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.6, friction=mu)
        checked = 0
        for _ in range(200):
            state = MavState(p=rng.normal(size=3), R=random_rotation(rng),
                             v=rng.normal(0, 3, 3), w=rng.normal(0, 8, 3))
            i = int(rng.integers(0, 12))
            n = beam_normal(FRAME, i, state.R)
            v_pre = vertex_velocity_world(state, FRAME, i)
            if n @ v_pre >= -1e-6:
                continue
            j = vertex_impulse(state, FRAME, i, n, params, inertial)
            v_post = apply_impulse(state, FRAME, i, j, inertial)
            assert abs(n @ v_post + params.restitution * (n @ v_pre)) < 1e-9
            checked += 1
        assert checked > 100

    def test_friction_opposes_sliding(self):
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.5, friction=0.3)
        i = 2
        n = beam_normal(FRAME, i, np.eye(3))
        t = np.array([n[1], -n[0], 0.0])
        t = t / np.linalg.norm(t)
        state = MavState(v=-0.5 * n + 2.0 * t)
        j = vertex_impulse(state, FRAME, i, n, params, inertial)
        assert j @ t < 0   # impulse opposes the tangential motion

    def test_friction_never_reverses_slide(self):
        # large mu on a light shell: capped at the slide-stopping impulse
        rng = np.random.default_rng(23)
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.4, friction=1.0)
        for _ in range(200):
            state = MavState(R=random_rotation(rng), v=rng.normal(0, 2, 3),
                             w=rng.normal(0, 5, 3))
            i = int(rng.integers(0, 12))
            n = beam_normal(FRAME, i, state.R)
            v_pre = vertex_velocity_world(state, FRAME, i)
            if n @ v_pre >= -1e-3:
                continue
            j = vertex_impulse(state, FRAME, i, n, params, inertial)
            v_post = apply_impulse(state, FRAME, i, j, inertial)
            t_pre = v_pre - (n @ v_pre) * n
            t_post = v_post - (n @ v_post) * n
            if np.linalg.norm(t_pre) > 1e-6:
                # tangential velocity may shrink to ~zero but not flip
                assert t_post @ t_pre > -1e-9


def make_contacts(indices):
    flags = np.zeros(12, dtype=bool)
    flags[list(indices)] = True
    return ContactVector(flags, np.zeros((12, 3)))


class TestCollisionDelta:
    def test_requires_active_contact(self):
        with pytest.raises(ValueError):
            collision_delta(MavState(), FRAME, make_contacts([]),
                            RestitutionParams(), InertialParams())

    def test_single_contact_unnormalized(self):
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.5, friction=0.0)
        i = 0
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=-n)
        delta = collision_delta(state, FRAME, make_contacts([i]), params,
                                inertial)
        j = vertex_impulse(state, FRAME, i, n, params, inertial)
        assert np.allclose(delta.dv, j / inertial.mass, atol=1e-14)
        assert delta.active_count == 1

    def test_head_on_restitution_scalar(self):
        # 1 m/s central impact, e=0.5 -> dv . n = 1.5 m/s
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.5, friction=0.0)
        i = 0
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=-n)
        delta = collision_delta(state, FRAME, make_contacts([i]), params,
                                inertial)
        assert np.isclose(delta.dv @ n, 1.5, atol=1e-12)

    def test_symmetric_pair_cancels_rotation(self):
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.5, friction=0.4)
        # two vertices symmetric about the x-z plane, moving along -x
        verts = FRAME.vertices
        pair = [(i, j) for i in range(12) for j in range(12)
                if i != j and np.isclose(verts[i, 0], verts[j, 0])
                and np.isclose(verts[i, 1], -verts[j, 1])
                and np.isclose(verts[i, 2], verts[j, 2])
                and abs(verts[i, 1]) > 0.01]
        i, j = pair[0]
        state = MavState(v=[-1.0, 0, 0])
        delta = collision_delta(state, FRAME, make_contacts([i, j]), params,
                                inertial)
        assert abs(delta.dw[0]) < 1e-10 and abs(delta.dw[2]) < 1e-10

    def test_all_separating_zero_delta(self):
        inertial = InertialParams()
        params = RestitutionParams()
        i = 0
        n = beam_normal(FRAME, i, np.eye(3))
        state = MavState(v=n)      # receding
        delta = collision_delta(state, FRAME, make_contacts([i]), params,
                                inertial)
        assert np.allclose(delta.dv, 0) and delta.active_count == 0

    def test_energy_never_increases_randomized(self):
        rng = np.random.default_rng(99)
        inertial = InertialParams()
        for _ in range(1000):
            e = rng.uniform(0, 1)
            mu = rng.uniform(0, 1)
            params = RestitutionParams(restitution=e, friction=mu)
            state = MavState(R=random_rotation(rng), v=rng.normal(0, 4, 3),
                             w=rng.normal(0, 10, 3))
            k = int(rng.integers(1, 4))
            idx = rng.choice(12, size=k, replace=False)
            pre = state.kinetic_energy(inertial)
            delta = collision_delta(state, FRAME, make_contacts(idx), params,
                                    inertial)
            post = MavState(state.p, state.R, state.v + delta.dv,
                            state.w + delta.dw).kinetic_energy(inertial)
            assert post <= pre * (1 + 1e-9) + 1e-12

    def test_frame_equivariance(self):
        rng = np.random.default_rng(7)
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.5, friction=0.3)
        state = MavState(R=random_rotation(rng), v=[-2.0, 0.5, -0.3],
                         w=[1.0, -2.0, 0.5])
        idx = [0, 5]
        d0 = collision_delta(state, FRAME, make_contacts(idx), params, inertial)
        Q = random_rotation(rng)
        rotated = MavState(Q @ state.p, Q @ state.R, Q @ state.v, state.w)
        d1 = collision_delta(rotated, FRAME, make_contacts(idx), params,
                             inertial)
        assert np.allclose(d1.dv, Q @ d0.dv, atol=1e-10)
        assert np.allclose(d1.dw, d0.dw, atol=1e-10)


def synth_samples(rng, e, mu, n, inertial, tangential_ratio=6.0, noise=0.0):
    """Synthetic sliding impacts generated by the model's own forward map."""
    params = RestitutionParams(restitution=e, friction=mu)
    samples = []
    while len(samples) < n:
        R = random_rotation(rng)
        i = int(rng.integers(0, 12))
        nrm = beam_normal(FRAME, i, R)
        t = rng.normal(size=3)
        t -= (t @ nrm) * nrm
        t /= np.linalg.norm(t)
        v_n = rng.uniform(0.5, 2.0)
        v_t = v_n * tangential_ratio * rng.uniform(0.8, 1.2)
        v_pre = -v_n * nrm + v_t * t
        sample = ImpactSample(v_pre, np.zeros(3), i, R)
        v_post = predicted_post_velocity(sample, FRAME, params, inertial)
        v_post = v_post + rng.normal(0, noise, 3)
        samples.append(ImpactSample(v_pre, v_post, i, R))
    return samples


class TestFit:
    def test_noiseless_roundtrip(self):
        rng = np.random.default_rng(42)
        inertial = InertialParams()
        samples = synth_samples(rng, 0.5, 0.2, 30, inertial)
        fit = fit_restitution_friction(samples, FRAME, inertial)
        assert abs(fit.params.restitution - 0.5) < 1e-9
        assert abs(fit.params.friction - 0.2) < 1e-9
        assert fit.friction_identifiable
        assert fit.residual_rms < 1e-10

    def test_normal_only_unidentifiable(self):
        rng = np.random.default_rng(43)
        inertial = InertialParams()
        params = RestitutionParams(restitution=0.7, friction=0.0)
        samples = []
        for _ in range(10):
            R = random_rotation(rng)
            i = int(rng.integers(0, 12))
            nrm = beam_normal(FRAME, i, R)
            v_pre = -rng.uniform(0.5, 2.0) * nrm
            s = ImpactSample(v_pre, np.zeros(3), i, R)
            v_post = predicted_post_velocity(s, FRAME, params, inertial)
            samples.append(ImpactSample(v_pre, v_post, i, R))
        fit = fit_restitution_friction(samples, FRAME, inertial)
        assert not fit.friction_identifiable
        assert abs(fit.params.restitution - 0.7) < 1e-9

    def test_noisy_recovery(self):
        rng = np.random.default_rng(44)
        inertial = InertialParams()
        samples = synth_samples(rng, 0.5, 0.2, 100, inertial, noise=0.01)
        fit = fit_restitution_friction(samples, FRAME, inertial)
        assert abs(fit.params.restitution - 0.5) < 0.05
        assert abs(fit.params.friction - 0.2) < 0.05

    def test_too_few_samples(self):
        inertial = InertialParams()
        with pytest.raises(ValueError):
            fit_restitution_friction([], FRAME, inertial)

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(45)
        inertial = InertialParams()
        samples = synth_samples(rng, 0.4, 0.3, 8, inertial)
        path = tmp_path / "impacts.csv"
        save_impact_csv(path, samples)
        loaded = load_impact_csv(path)
        assert len(loaded) == len(samples)
        for a, b in zip(samples, loaded):
            assert np.allclose(a.v_pre, b.v_pre, atol=1e-12)
            assert np.allclose(a.v_post, b.v_post, atol=1e-12)
            assert a.vertex == b.vertex
            assert np.allclose(a.rotation, b.rotation, atol=1e-9)
        fit = fit_restitution_friction(loaded, FRAME, inertial)
        assert abs(fit.params.restitution - 0.4) < 1e-6
        assert abs(fit.params.friction - 0.3) < 1e-6

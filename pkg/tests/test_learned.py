import math

import numpy as np
import pytest
import torch

from pdeforge import fieldgen as fg
from pdeforge.gridfield import Grid
from pdeforge.learned import (CorrectionNet, LearnedMG, PoissonNN, Schedule, TrainingError, fft_conv, haar_dwt,
                              haar_idwt, learned_vcycle, leaky_relu, periodic_conv, periodic_conv_transpose,
                              periodic_laplacian, poisson_nn_forward, relative_l2, strided_conv,
                              strided_conv_transpose, train)
from pdeforge.learned.training import losses
from pdeforge.linsolve import LaplaceOperator, MGConfig, mg_vcycle
from pdeforge.pairgen import Dataset, generate_dataset, make_poisson_pair


def _t(rng, *shape):
    return torch.as_tensor(rng.standard_normal(shape))


# -- kernels ----------------------------------------------------------------


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_haar_round_trip_and_energy(dim, rng):
    x = _t(rng, 2, 3, *(8,) * dim)
    y = haar_dwt(x)
    assert y.shape == (2, 3 * 2**dim, *(4,) * dim)
    torch.testing.assert_close(haar_idwt(y), x, rtol=0, atol=1e-14)
    assert abs(float((y**2).sum() - (x**2).sum())) <= 1e-12 * float((x**2).sum())


def test_haar_constant_goes_to_approximation_band():
    y = haar_dwt(torch.ones(1, 1, 4, 4, dtype=torch.float64))
    np.testing.assert_allclose(y[0, 0].numpy(), 2.0)
    assert float(y[0, 1:].abs().max()) == 0


def test_identity_and_shift_kernels(rng):
    x = _t(rng, 1, 1, 6, 6)
    w = torch.zeros(1, 1, 3, 3, dtype=torch.float64)
    w[0, 0, 1, 1] = 1
    torch.testing.assert_close(periodic_conv(x, w), x, rtol=0, atol=0)
    w.zero_()
    w[0, 0, 2, 1] = 1  # y[i] = x[i + 1]
    torch.testing.assert_close(periodic_conv(x, w), torch.roll(x, -1, 2), rtol=0, atol=0)


def test_conv_transpose_is_linear_interpolation():
    w1 = torch.tensor([0.5, 1.0, 0.5], dtype=torch.float64)
    w = (w1[:, None] * w1)[None, None]
    coarse = torch.arange(16, dtype=torch.float64).reshape(1, 1, 4, 4)
    fine = periodic_conv_transpose(coarse, w)
    assert fine.shape == (1, 1, 8, 8)
    torch.testing.assert_close(fine[..., ::2, ::2], coarse)
    torch.testing.assert_close(fine[0, 0, 1, 0], 0.5 * (coarse[0, 0, 0, 0] + coarse[0, 0, 1, 0]))


def test_fft_conv_matches_double_loop(rng):
    n = 8
    g, b = rng.standard_normal((2, n, n))
    ref = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for m in range(n):
                    ref[i, j] += g[(i - k) % n, (j - m) % n] * b[k, m]
    out = fft_conv(torch.as_tensor(g), torch.as_tensor(b), 2, volume=0.25).numpy()
    np.testing.assert_allclose(out, 0.25 * ref, rtol=0, atol=1e-12 * np.abs(ref).max())


def test_periodic_laplacian_matches_numpy(rng):
    g = Grid((8, 6), (1.0, 2.0))
    x = rng.standard_normal(g.shape)
    out = periodic_laplacian(torch.as_tensor(x), g.spacing).numpy()
    np.testing.assert_allclose(out, LaplaceOperator(g)(x), atol=1e-12)


def test_kernel_shape_errors(rng):
    with pytest.raises(ValueError):
        periodic_conv(_t(rng, 1, 1, 4, 4), _t(rng, 1, 1, 2, 2))
    with pytest.raises(ValueError):
        periodic_conv(_t(rng, 1, 2, 4, 4), _t(rng, 1, 1, 3, 3))
    with pytest.raises(ValueError):
        periodic_conv(_t(rng, 1, 1, 5, 4), _t(rng, 1, 1, 3, 3), stride=2)
    with pytest.raises(ValueError):
        haar_idwt(_t(rng, 1, 3, 4, 4))


# -- gradient checks ----------------------------------------------------------


def _fd_check(fn, inputs, rng, eps=1e-5, tol=1e-6, samples=6):
    """Compare autodiff gradients with central differences on random entries."""
    inputs = [x.clone().requires_grad_(True) for x in inputs]
    out = fn(*inputs)
    probe = torch.as_tensor(rng.standard_normal(out.shape))
    (out * probe).sum().backward()
    worst = 0.0
    for pos, x in enumerate(inputs):
        flat = x.detach().reshape(-1)
        for idx in rng.choice(flat.numel(), size=min(samples, flat.numel()), replace=False):
            vals = []
            for s in (1, -1):
                args = [y.detach().clone() for y in inputs]
                args[pos].view(-1)[idx] += s * eps
                vals.append(float((fn(*args) * probe).sum().detach()))
            fd = (vals[0] - vals[1]) / (2 * eps)
            ad = float(x.grad.reshape(-1)[idx])
            worst = max(worst, abs(fd - ad) / max(abs(ad), abs(fd), 1.0))
    assert worst <= tol, worst


def _kernel_cases(rng):
    w3 = _t(rng, 2, 3, 3, 3)
    return {
        "periodic_conv": (lambda x, w: periodic_conv(x, w), [_t(rng, 2, 3, 8, 8), w3]),
        "periodic_conv_stride": (lambda x, w: periodic_conv(x, w, stride=2), [_t(rng, 2, 3, 8, 8), w3]),
        "periodic_conv_3d": (periodic_conv, [_t(rng, 1, 1, 4, 4, 4), _t(rng, 1, 1, 3, 3, 3)]),
        "periodic_conv_transpose": (periodic_conv_transpose, [_t(rng, 1, 1, 4, 4), _t(rng, 1, 1, 3, 3)]),
        "strided_conv": (strided_conv, [_t(rng, 2, 1, 8, 8), _t(rng, 4, 1, 2, 2)]),
        "strided_conv_transpose": (strided_conv_transpose, [_t(rng, 2, 4, 4, 4), _t(rng, 4, 1, 2, 2)]),
        "haar_dwt": (haar_dwt, [_t(rng, 2, 2, 8, 8)]),
        "haar_idwt": (haar_idwt, [_t(rng, 2, 8, 4, 4)]),
        "fft_conv": (lambda g, b: fft_conv(g, b, 2, volume=0.1), [_t(rng, 8, 8), _t(rng, 3, 8, 8)]),
        "periodic_laplacian": (lambda x: periodic_laplacian(x, (0.5, 0.25)), [_t(rng, 2, 8, 8)]),
        "leaky_relu": (leaky_relu, [_t(rng, 4, 16)]),
        "relative_l2": (lambda a, b: relative_l2(a, b, 2), [_t(rng, 3, 8, 8), _t(rng, 3, 8, 8)]),
    }


@pytest.mark.parametrize("name", list(_kernel_cases(np.random.default_rng(0))))
def test_kernel_gradients(name):
    rng = np.random.default_rng(7)
    fn, inputs = _kernel_cases(rng)[name]
    _fd_check(fn, inputs, rng)


@pytest.mark.parametrize("variant", ["nmg", "cnn-mg", "wtcnn-mg"])
def test_learned_vcycle_gradients(variant, rng):
    torch.manual_seed(0)
    g = Grid.periodic(16, 2)
    m = LearnedMG(g, variant, MGConfig(levels=3))
    for p in m.parameters():  # move off the zero-init output so every path is live
        with torch.no_grad():
            p.add_(0.01 * torch.randn_like(p))
    b = _t(rng, 2, 16, 16)
    names = [n for n, p in m.named_parameters() if p.requires_grad]
    for name in names[:: max(1, len(names) // 6)]:
        param = dict(m.named_parameters())[name]
        _fd_check(lambda w: torch.func.functional_call(m, {name: w}, (b,)), [param.detach()], rng)


def test_poisson_nn_gradients(rng):
    m = PoissonNN((8, 8), kernel_net="siren", boundary_net="siren")
    b = _t(rng, 2, 8, 8)
    params = dict(m.named_parameters())
    for name in ("kernel_net.hidden.0.weight", "boundary_net.out.weight"):
        _fd_check(lambda w: torch.func.functional_call(m, {name: w}, (b,)), [params[name].detach()], rng)
    mf = PoissonNN((8, 8))
    for name in ("kernel_net.re", "kernel_net.im", "boundary_net.re"):
        _fd_check(lambda w: torch.func.functional_call(mf, {name: w}, (b,)), [dict(mf.named_parameters())[name].detach()],
                  rng)


# -- Poisson network ----------------------------------------------------------


@pytest.mark.parametrize("kind", ["fourier", "siren"])
def test_zero_networks_predict_zero(kind, rng):
    m = PoissonNN((8, 8), kernel_net=kind, boundary_net=kind)
    for p in m.parameters():
        torch.nn.init.zeros_(p)
    assert np.all(m.predict(rng.standard_normal((8, 8))) == 0)


def test_fourier_kernel_field_matches_multiplier(rng):
    m = PoissonNN((8, 8), boundary_net=None)
    with torch.no_grad():
        m.kernel_net.re.normal_()
        m.kernel_net.im.normal_()
    b = torch.as_tensor(rng.standard_normal((8, 8)))
    b = b - b.mean()
    direct = fft_conv(m.kernel_net((8, 8)), b, 2, volume=(2 * math.pi / 8) ** 2)
    torch.testing.assert_close(m(b), direct - direct.mean(), rtol=0, atol=1e-12)


def test_poisson_nn_rejects_walls():
    g = Grid((8, 8), (1.0, 1.0), ["dirichlet", "periodic"])
    with pytest.raises(ValueError):
        poisson_nn_forward(PoissonNN((8, 8)), np.zeros((8, 8)), g)
    with pytest.raises(ValueError):
        PoissonNN((8, 8), kernel_net="mlp")


@pytest.fixture(scope="module")
def trained_poisson_nn():
    g = Grid.periodic(64, 2)
    ds = generate_dataset("spectrum", 60, g, seed=0, validation_fraction=1 / 6)
    model, curves = train(PoissonNN(g.n, g.length), ds, Schedule(epochs=2000), log_every=0)
    return g, ds, model, curves


def test_trained_poisson_nn_accuracy(trained_poisson_nn):
    g, ds, model, curves = trained_poisson_nn
    b, p = ds.rhs(ds.validation), ds.solutions(ds.validation)
    err = np.linalg.norm(poisson_nn_forward(model, b, g) - p, axis=(1, 2)) / np.linalg.norm(p, axis=(1, 2))
    assert err.mean() <= 5e-2
    assert curves.loss[-1] < curves.loss[0]


def test_poisson_nn_at_another_resolution(trained_poisson_nn):
    _, _, model, _ = trained_poisson_nn
    errs = []
    for n in (64, 128):
        g = Grid.periodic(n, 2)
        x = g.coords()[0]
        h = g.spacing[0]
        b = np.cos(3 * x)
        p = -b / ((2 - 2 * math.cos(3 * h)) / h**2)
        out = model.predict(b)
        assert out.shape == (n, n)
        errs.append(np.linalg.norm(out - p) / np.linalg.norm(p))
    assert errs[1] <= errs[0] + 0.02


# -- learned multigrid --------------------------------------------------------


@pytest.mark.parametrize("variant", ["nmg", "cnn-mg", "wtcnn-mg"])
@pytest.mark.parametrize("shape", [(64, 64), (16, 16, 16)])
def test_classical_initialisation_reproduces_vcycle(variant, shape, rng):
    g = Grid.periodic(shape[0], len(shape))
    m = LearnedMG(g, variant)
    op = LaplaceOperator(g)
    for _ in range(3):
        b = rng.standard_normal(g.shape)
        b -= b.mean()
        x0 = rng.standard_normal(g.shape)
        ref = mg_vcycle(op, b, x0, m.config)
        out = learned_vcycle(m, b, x0)
        assert np.linalg.norm(out - ref) <= 1e-10 * np.linalg.norm(ref)


def test_zero_rhs_gives_zero(rng):
    m = LearnedMG(Grid.periodic(32, 2), "wtcnn-mg")
    for p in m.parameters():
        with torch.no_grad():
            p.add_(0.1 * torch.randn_like(p))
    assert np.all(learned_vcycle(m, np.zeros((32, 32))) == 0)


def test_correction_net_is_positively_homogeneous(rng):
    torch.manual_seed(1)
    for wavelet in (True, False):
        net = CorrectionNet(2, 4, wavelet=wavelet)
        torch.nn.init.normal_(net.conv_out)
        x = _t(rng, 1, 1, 16, 16)
        torch.testing.assert_close(net(3.7 * x), 3.7 * net(x), rtol=1e-12, atol=1e-12)


def test_learned_mg_errors():
    with pytest.raises(ValueError):
        LearnedMG(Grid.periodic(32, 2), "unet-mg")
    m = LearnedMG(Grid.periodic(32, 2), "nmg")
    with pytest.raises(ValueError):
        learned_vcycle(m, np.zeros((64, 64)))
    with pytest.raises(ValueError):
        LearnedMG(Grid.periodic(24, 2), "wtcnn-mg", MGConfig(levels=4))


# -- training -----------------------------------------------------------------


def _one_pair(n=16):
    g = Grid.periodic(n, 2)
    pair = make_poisson_pair(fg.synth_scalar_field(g, fg.PowerLaw(), 64, 0), g)
    return Dataset(g, [pair], [0], [])


def test_two_epochs_reduce_loss():
    ds = _one_pair()
    for model in (PoissonNN(ds.grid.n, ds.grid.length), LearnedMG(ds.grid, "wtcnn-mg")):
        _, curves = train(model, ds, Schedule(epochs=2), log_every=0)
        assert curves.loss[1] < curves.loss[0]
        assert math.isnan(curves.val_loss_p[0])


def test_learning_rate_schedule():
    s = Schedule()
    assert s.lr_at(0) == 1e-3 and s.lr_at(999) == 5e-4 and s.lr_at(1000) == 2.5e-4
    ds = _one_pair(8)
    _, curves = train(PoissonNN((8, 8)), ds, Schedule(epochs=5, halve_every=2), log_every=0)
    assert curves.lr == [1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4]


def test_weight_decay_off_adds_nothing():
    ds = _one_pair()
    b = torch.as_tensor(ds.rhs())
    p = torch.as_tensor(ds.solutions())
    grads = []
    for lam in (0.0, 1e-6):
        m = LearnedMG(ds.grid, "nmg")
        total, *_ = losses(m, b, p, ds.grid.spacing, Schedule(lambda_wd=lam))
        total.backward()
        grads.append(torch.cat([q.grad.reshape(-1) for q in m.parameters() if q.requires_grad]))
        if lam == 0.0:
            m2 = LearnedMG(ds.grid, "nmg")
            fit, lp, leq, _ = losses(m2, b, p, ds.grid.spacing, Schedule(lambda_wd=0.0))
            assert float(fit.detach()) == float((lp + leq).detach())
    assert not torch.equal(grads[0], grads[1])


def test_training_is_deterministic():
    ds = generate_dataset("spectrum", 6, Grid.periodic(16, 2), seed=2, validation_fraction=0.5)
    runs = []
    for _ in range(2):
        torch.manual_seed(123)  # different global state must not matter
        m, curves = train(LearnedMG(ds.grid, "cnn-mg"), ds, Schedule(epochs=3, batch_size=2, seed=5), log_every=0)
        runs.append((curves.loss, [q.detach().clone() for q in m.parameters()]))
    assert runs[0][0] == runs[1][0]
    assert all(torch.equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))


def test_non_finite_loss_aborts():
    ds = _one_pair(8)
    m = PoissonNN((8, 8))
    with torch.no_grad():
        m.kernel_net.re[1, 1] = float("nan")
    with pytest.raises(TrainingError, match="non-finite loss at epoch 0"):
        train(m, ds, Schedule(epochs=3), log_every=0)
    ds.pairs[0].rhs[0, 0] = np.inf
    with pytest.raises(TrainingError):
        train(PoissonNN((8, 8)), ds, Schedule(epochs=1), log_every=0)


def test_training_shape_mismatch():
    ds = _one_pair(16)
    with pytest.raises(ValueError, match="model built for grid"):
        train(LearnedMG(Grid.periodic(32, 2), "nmg"), ds, Schedule(epochs=1), log_every=0)
    with pytest.raises(TrainingError):
        train(PoissonNN((16, 16)), Dataset(ds.grid, ds.pairs, [], [0]), Schedule(epochs=1))

# --------------------------------------------------------
# relative entropy of entanglement: batched descent over separable ensembles
# --------------------------------------------------------
# sigma = (1 - mixing) sum_j p_j |a_j><a_j| x |b_j><b_j| (x |c_j><c_j|) + mixing * I / d
# Every restart is one element of a torch batch. A short alternating phase moves weights by exponentiated gradient
# on the simplex and factors by a preconditioned gradient step with Armijo backtracking. A limited-memory
# quasi-Newton phase then polishes weights (as softmax logits) and Bloch angles jointly. Every step is masked
# per restart and each restart keeps its own curvature history.
import itertools
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
import torch
from tqdm import tqdm

from decohere.states import (DensityMatrix, as_density, permute_qubits, marginals, product_of_marginals,
                             trace_distance, eig_hermitian, clamp_spectrum)
from decohere.measures import relative_entropy, von_neumann_entropy, EIG_FLOOR

RDTYPE = torch.float64
CDTYPE = torch.complex128

MIXING = 1e-12
MERGE_TOL = 1e-12
PRODUCT_TOL = 1e-12
MAX_HALVINGS = 40
MAX_STEP = 1e4
ARMIJO = 1e-4
STATIONARY_SQ = 1e-24
CURVATURE_EPS = 1e-10
PATIENCE = 3
WEIGHT_FLOOR = 1e-200

StepResult = namedtuple('StepResult', 'ensemble objective accepted')
_Problem = namedtuple('_Problem', 'rho entropy mixing floor')


@dataclass
class ReeOptions:
    m: int = None  # None: 4 * 2^n members
    restarts: int = 24
    max_iters: int = 2000
    tol: float = 1e-8
    seed: int = 0
    zero_floor: float = 1e-6
    warmup: int = 25  # alternating iterations before the quasi-Newton phase
    history: int = 10
    verbose: bool = False

    def ensemble_size(self, n_qubits):
        return 4 * 2 ** n_qubits if self.m is None else self.m

    def __post_init__(self):
        if self.m is not None and self.m < 1:
            raise ValueError(f'ensemble size must be >= 1, got {self.m=}')
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError(f'bad solver budget {self.restarts=} {self.max_iters=}')
        if self.warmup < 0 or self.history < 1:
            raise ValueError(f'bad solver phases {self.warmup=} {self.history=}')
        if self.tol <= 0 or self.zero_floor < 0:
            raise ValueError(f'bad tolerances {self.tol=} {self.zero_floor=}')


def _gauge_fix(factors):
    """ multiply each single-qubit ket by a phase so that its first nonzero amplitude is real >= 0 """
    first = np.abs(factors[..., 0]) > 1e-15
    lead = np.where(first, factors[..., 0], factors[..., 1])
    fixed = factors * np.exp(-1j * np.angle(lead))[..., None]
    fixed[..., 0] = np.where(first, fixed[..., 0].real, 0)
    fixed[..., 1] = np.where(first, fixed[..., 1], fixed[..., 1].real)
    return fixed


def _kron_rows(factors):
    """ (m, n, 2) single-qubit kets -> (m, 2^n) product kets, qubit 0 most significant """
    kets = factors[:, 0]
    for q in range(1, factors.shape[1]):
        kets = (kets[:, :, None] * factors[:, q, None, :]).reshape(len(kets), -1)
    return kets


@dataclass(eq=False)
class SeparableEnsemble:
    weights: np.ndarray
    factors: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        f = np.array(self.factors, dtype=np.complex128)
        assert f.ndim == 3 and f.shape[-1] == 2 and f.shape[0] == len(w), f'bad {f.shape=} for {len(w)} weights'
        if w.min() < 0 or abs(w.sum() - 1) > 1e-12:
            raise ValueError(f'ensemble weights must be a probability vector, sum = {w.sum()!r}')
        norm_err = np.abs(np.linalg.norm(f, axis=-1) - 1).max()
        if norm_err > 1e-12:
            raise ValueError(f'ensemble factors are not normalized (max error {norm_err:.3e})')
        self.weights = w / w.sum()
        self.factors = _gauge_fix(f)

    @property
    def m(self):
        return len(self.weights)

    @property
    def n_qubits(self):
        return self.factors.shape[1]

    @classmethod
    def random(cls, n_qubits, m, rng=None):
        """ Haar-random factors, uniform weights """
        rng = np.random.default_rng(rng)
        f = rng.normal(size=(m, n_qubits, 2)) + 1j * rng.normal(size=(m, n_qubits, 2))
        f /= np.linalg.norm(f, axis=-1, keepdims=True)
        return cls(np.full(m, 1 / m), f)

    @classmethod
    def from_angles(cls, weights, theta, phi):
        theta, phi = np.asarray(theta, dtype=float), np.asarray(phi, dtype=float)
        f = np.stack([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], axis=-1)
        return cls(weights, f)

    def angles(self):
        a0, a1 = self.factors[..., 0].real, self.factors[..., 1]
        return 2 * np.arctan2(np.abs(a1), a0), np.angle(a1)

    def kets(self):
        return _kron_rows(self.factors)

    def sigma(self, mixing=0.):
        kets = self.kets()
        d = kets.shape[1]
        s = np.einsum('m,mi,mj->ij', self.weights, kets, kets.conj())
        s = (1 - mixing) * s + mixing * np.eye(d) / d
        return DensityMatrix(self.n_qubits, (s + s.conj().T) / 2)

    def permuted(self, perm):
        """ ensemble of the qubit-permuted state: new qubit i is old qubit perm[i] """
        return SeparableEnsemble(self.weights, self.factors[:, list(perm)])

    def merged(self, tol=MERGE_TOL):
        """ sum the weights of members that coincide on every qubit (up to phase) """
        keep, weights = [], []
        for j in range(self.m):
            for k, i in enumerate(keep):
                overlap = np.abs(np.einsum('qa,qa->q', self.factors[i].conj(), self.factors[j])) ** 2
                if np.all(overlap > 1 - tol):
                    weights[k] += self.weights[j]
                    break
            else:
                keep.append(j)
                weights.append(self.weights[j])
        return SeparableEnsemble(np.array(weights), self.factors[keep])


@dataclass
class ReeResult:
    value: float
    sigma_star: DensityMatrix
    iterations: int
    restarts_used: int
    converged: bool
    spread: float
    ensemble: SeparableEnsemble = field(default=None, repr=False)
    zero_floor: float = 1e-6

    @property
    def entanglement(self):
        """ value snapped to exactly 0 below zero_floor """
        return 0. if self.value < self.zero_floor else self.value


# ---- torch objective ----

class _CrossEntropy(torch.autograd.Function):
    """ -Tr(rho ln sigma) for a batch of Hermitian sigma.
        The backward pass is the Daleckii-Krein first divided difference of ln in the eigenbasis of sigma.
    """
    @staticmethod
    def forward(ctx, sigma, rho, floor):
        mu, V = torch.linalg.eigh(sigma)
        mu = mu.clamp(min=floor)
        log_mu = mu.log()
        rho_t = V.mH @ rho @ V
        ctx.save_for_backward(mu, log_mu, V, rho_t)
        return -(torch.diagonal(rho_t, dim1=-2, dim2=-1).real * log_mu).sum(-1)

    @staticmethod
    def backward(ctx, grad_out):
        mu, log_mu, V, rho_t = ctx.saved_tensors
        mu_i, mu_j = mu[..., :, None], mu[..., None, :]
        dmu = mu_i - mu_j
        close = dmu.abs() <= 1e-8 * torch.maximum(mu_i, mu_j)
        dlog = (log_mu[..., :, None] - log_mu[..., None, :]) / torch.where(close, torch.ones_like(dmu), dmu)
        divided = torch.where(close, 2 / (mu_i + mu_j), dlog)
        grad = V @ (divided.to(CDTYPE) * rho_t) @ V.mH
        return -grad_out[..., None, None].to(CDTYPE) * grad, None, None


def _factors(theta, phi):
    a0 = torch.cos(theta / 2).to(CDTYPE)
    a1 = torch.sin(theta / 2) * torch.complex(torch.cos(phi), torch.sin(phi))
    return torch.stack([a0, a1], dim=-1)


def _sigma(weights, theta, phi, mixing):
    """ (B, m), (B, m, n), (B, m, n) -> (B, d, d) """
    f = _factors(theta, phi)
    kets = f[..., 0, :]
    for q in range(1, f.shape[-2]):
        kets = (kets[..., :, None] * f[..., q, None, :]).flatten(-2)
    d = kets.shape[-1]
    s = torch.einsum('bm,bmi,bmj->bij', weights.to(CDTYPE), kets, kets.conj())
    return (1 - mixing) * s + (mixing / d) * torch.eye(d, dtype=CDTYPE)


def _objective(problem, weights, theta, phi):
    sigma = _sigma(weights, theta, phi, problem.mixing)
    return _CrossEntropy.apply(sigma, problem.rho, problem.floor) - problem.entropy


def _problem(rho):
    rho = as_density(rho)
    return _Problem(torch.tensor(np.array(rho.elements), dtype=CDTYPE), von_neumann_entropy(rho), MIXING, EIG_FLOOR)


def _to_batch(ensembles):
    weights = torch.as_tensor(np.stack([e.weights for e in ensembles]), dtype=RDTYPE)
    angles = [e.angles() for e in ensembles]
    theta = torch.as_tensor(np.stack([a[0] for a in angles]), dtype=RDTYPE)
    phi = torch.as_tensor(np.stack([a[1] for a in angles]), dtype=RDTYPE)
    return weights, theta, phi


def _from_batch(weights, theta, phi, b=0):
    w = weights[b].detach().numpy().astype(float)
    return SeparableEnsemble.from_angles(w / w.sum(), theta[b].detach().numpy(), phi[b].detach().numpy())


def _weight_grad(problem, weights, theta, phi):
    w = weights.detach().clone().requires_grad_(True)
    _objective(problem, w, theta, phi).sum().backward()
    return w.grad


def _angle_grads(problem, weights, theta, phi):
    th = theta.detach().clone().requires_grad_(True)
    ph = phi.detach().clone().requires_grad_(True)
    _objective(problem, weights, th, ph).sum().backward()
    return th.grad, ph.grad


# ---- batched steps ----

def _weight_step(problem, weights, theta, phi, f, eta, active):
    """ exponentiated gradient with backtracking; a trial is kept only on strict decrease """
    g = _weight_grad(problem, weights, theta, phi)
    with torch.no_grad():
        new_w, new_f = weights.clone(), f.clone()
        accepted = torch.zeros_like(active)
        pending, step = active.clone(), eta.clone()
        log_w = weights.log()
        for _ in range(MAX_HALVINGS):
            if not pending.any():
                break
            trial = torch.softmax(log_w - step[:, None] * g, dim=-1)
            f_trial = _objective(problem, trial, theta, phi)
            ok = pending & (f_trial < f)
            new_w[ok], new_f[ok] = trial[ok], f_trial[ok]
            accepted |= ok
            pending &= ~ok
            step = torch.where(pending, step / 2, step)
        eta = torch.where(accepted, (2 * step).clamp(max=MAX_STEP), torch.ones_like(step))
    return new_w, new_f, eta, accepted


def _factor_step(problem, weights, theta, phi, f, t, active):
    """ gradient step on the Bloch angles, preconditioned by the member weights, with Armijo backtracking """
    g_th, g_ph = _angle_grads(problem, weights, theta, phi)
    with torch.no_grad():
        precond = weights.clamp(min=1e-8)[..., None]
        d_th, d_ph = -g_th / precond, -g_ph / precond
        slope = (g_th * d_th + g_ph * d_ph).sum((-1, -2))  # <= 0
        new_th, new_ph, new_f = theta.clone(), phi.clone(), f.clone()
        accepted = torch.zeros_like(active)
        pending, step = active & (-slope > STATIONARY_SQ), t.clone()
        for _ in range(MAX_HALVINGS):
            if not pending.any():
                break
            tr_th = theta + step[:, None, None] * d_th
            tr_ph = phi + step[:, None, None] * d_ph
            f_trial = _objective(problem, weights, tr_th, tr_ph)
            ok = pending & (f_trial < f) & (f_trial <= f + ARMIJO * step * slope)
            new_th[ok], new_ph[ok], new_f[ok] = tr_th[ok], tr_ph[ok], f_trial[ok]
            accepted |= ok
            pending &= ~ok
            step = torch.where(pending, step / 2, step)
        t = torch.where(accepted, (2 * step).clamp(max=MAX_STEP), torch.ones_like(step))
    return new_th, new_ph, new_f, t, accepted


# ---- joint quasi-Newton phase ----

def _pack(weights, theta, phi):
    """ (B, m), (B, m, n), (B, m, n) -> (B, m + 2mn) with weights as logits """
    return torch.cat([weights.clamp(min=WEIGHT_FLOOR).log(), theta.flatten(1), phi.flatten(1)], dim=-1)


def _unpack(x, m, n):
    theta = x[:, m:m + m * n].reshape(-1, m, n)
    phi = x[:, m + m * n:].reshape(-1, m, n)
    return torch.softmax(x[:, :m], dim=-1), theta, phi


def _value_and_grad(problem, x, m, n):
    x = x.detach().clone().requires_grad_(True)
    f = _objective(problem, *_unpack(x, m, n))
    f.sum().backward()
    return f.detach(), x.grad


def _two_loop(g, S, Y, valid):
    """ -H g for every batch row. History runs oldest to newest along dim 1, invalid pairs are skipped. """
    sy = (S * Y).sum(-1)
    inv_sy = torch.where(valid, 1 / torch.where(valid, sy, torch.ones_like(sy)), torch.zeros_like(sy))
    alpha = torch.zeros_like(sy)
    q = g.clone()
    for i in reversed(range(S.shape[1])):
        alpha[:, i] = inv_sy[:, i] * (S[:, i] * q).sum(-1)
        q = q - alpha[:, i, None] * Y[:, i]
    yy = (Y[:, -1] * Y[:, -1]).sum(-1)
    scale = torch.where(valid[:, -1], sy[:, -1] / torch.where(valid[:, -1], yy, torch.ones_like(yy)),
                        torch.ones_like(yy))
    r = scale[:, None] * q
    for i in range(S.shape[1]):
        beta = inv_sy[:, i] * (Y[:, i] * r).sum(-1)
        r = r + (alpha[:, i] - beta)[:, None] * S[:, i]
    return -r


def _push(history, new, mask):
    rolled = torch.roll(history, -1, dims=1)
    rolled[:, -1] = new
    return torch.where(mask.view(-1, *[1] * (history.ndim - 1)), rolled, history)


def _quasi_newton(problem, x, m, n, options, budget, bar):
    """ batched L-BFGS with Armijo backtracking. A restart stops after PATIENCE consecutive accepted steps
        gaining less than options.tol, or when steepest descent itself finds no decrease.
    """
    B, P = x.shape
    S = torch.zeros(B, options.history, P, dtype=RDTYPE)
    Y = torch.zeros_like(S)
    valid = torch.zeros(B, options.history, dtype=torch.bool)
    f, g = _value_and_grad(problem, x, m, n)
    active = torch.ones(B, dtype=torch.bool)
    converged = torch.zeros(B, dtype=torch.bool)
    quiet = torch.zeros(B, dtype=torch.long)
    iterations = torch.zeros(B, dtype=torch.long)

    for _ in range(budget):
        if not active.any():
            break
        with torch.no_grad():
            d = _two_loop(g, S, Y, valid)
            slope = (g * d).sum(-1)
            uphill = slope >= 0
            d = torch.where(uphill[:, None], -g, d)
            slope = torch.where(uphill, -(g * g).sum(-1), slope)
            valid &= ~uphill[:, None]
            fresh = ~valid.any(-1)
            # no curvature yet: the first trial moves by at most a unit length
            unit = (1 / g.norm(dim=-1).clamp(min=1e-300)).clamp(max=1.)
            step = torch.where(fresh, unit, torch.ones_like(slope))

            new_x, new_f = x.clone(), f.clone()
            accepted = torch.zeros_like(active)
            pending = active & (slope < 0)
            for _ in range(MAX_HALVINGS):
                if not pending.any():
                    break
                trial = x + step[:, None] * d
                f_trial = _objective(problem, *_unpack(trial, m, n))
                ok = pending & (f_trial < f) & (f_trial <= f + ARMIJO * step * slope)
                new_x[ok], new_f[ok] = trial[ok], f_trial[ok]
                accepted |= ok
                pending &= ~ok
                step = torch.where(pending, step / 2, step)

        f_new, g_new = _value_and_grad(problem, new_x, m, n)
        with torch.no_grad():
            s, y = new_x - x, g_new - g
            store = accepted & ((s * y).sum(-1) > CURVATURE_EPS * (y * y).sum(-1))
            S, Y = _push(S, s, store), _push(Y, y, store)
            valid = _push(valid, torch.ones(B, dtype=torch.bool), store)
            failed = active & ~accepted
            # a failed search with history retries from steepest descent
            valid &= ~(failed & ~fresh)[:, None]

            small = accepted & (f - new_f < options.tol)
            quiet = torch.where(small, quiet + 1, torch.where(accepted, torch.zeros_like(quiet), quiet))
            done = active & ((quiet >= PATIENCE) | (failed & fresh) | (slope >= 0))
            iterations += active.long()

            x = torch.where(accepted[:, None], new_x, x)
            f = torch.where(accepted, f_new, f)
            g = torch.where(accepted[:, None], g_new, g)
            converged |= done
            active &= ~done
        bar.set_postfix_str(f'best={float(f.min()):.10f}, active={int(active.sum())}')
        bar.update(1)
    return x, f, iterations, converged


# ---- single-ensemble API ----

def objective(rho, ensemble):
    """ S(rho || sigma(ensemble)) with the solver's regularization of sigma """
    weights, theta, phi = _to_batch([ensemble])
    with torch.no_grad():
        return float(_objective(_problem(rho), weights, theta, phi)[0])


def objective_gradient(rho, ensemble):
    """ analytic gradient w.r.t. weights and Bloch angles, as numpy arrays """
    problem = _problem(rho)
    weights, theta, phi = _to_batch([ensemble])
    g_th, g_ph = _angle_grads(problem, weights, theta, phi)
    g_w = _weight_grad(problem, weights, theta, phi)
    return dict(weights=g_w[0].numpy(), theta=g_th[0].numpy(), phi=g_ph[0].numpy())


def ree_fixed_states_weight_step(rho, ensemble, eta=1.):
    ensemble = ensemble.merged()
    problem = _problem(rho)
    weights, theta, phi = _to_batch([ensemble])
    with torch.no_grad():
        f = _objective(problem, weights, theta, phi)
    active = torch.ones(1, dtype=torch.bool)
    weights, f, _, accepted = _weight_step(problem, weights, theta, phi, f, torch.tensor([float(eta)], dtype=RDTYPE),
                                           active)
    if not accepted[0]:
        return StepResult(ensemble, float(f[0]), False)
    return StepResult(SeparableEnsemble(weights[0].numpy(), ensemble.factors), float(f[0]), True)


def ree_factor_step(rho, ensemble, step=1.):
    problem = _problem(rho)
    weights, theta, phi = _to_batch([ensemble])
    with torch.no_grad():
        f = _objective(problem, weights, theta, phi)
    active = torch.ones(1, dtype=torch.bool)
    theta, phi, f, _, accepted = _factor_step(problem, weights, theta, phi, f,
                                              torch.tensor([float(step)], dtype=RDTYPE), active)
    if not accepted[0]:
        return StepResult(ensemble, float(f[0]), False)
    return StepResult(_from_batch(weights, theta, phi), float(f[0]), True)


# ---- solver ----

def _canonical_permutation(rho):
    """ qubit order whose permuted matrix has the smallest rounded entries, lexicographically """
    def key(perm):
        r = np.round(permute_qubits(rho, perm).elements, 12)
        return tuple(np.concatenate([r.real.ravel(), r.imag.ravel()]))
    return min(itertools.permutations(range(rho.n_qubits)), key=key)


def _classical_ensemble(rho):
    diag = np.diag(rho.elements).real
    support = np.flatnonzero(diag > 0)
    bits = (support[:, None] >> (rho.n_qubits - 1 - np.arange(rho.n_qubits))[None, :]) & 1
    factors = np.stack([1 - bits, bits], axis=-1).astype(np.complex128)
    return SeparableEnsemble(diag[support] / diag[support].sum(), factors)


def _product_ensemble(rho):
    """ eigen-decomposition of every marginal; members are all products of marginal eigenvectors """
    per_qubit = []
    for m in marginals(rho):
        mu, V = eig_hermitian(m.elements)
        per_qubit.append((clamp_spectrum(mu), V.T))
    weights, factors = [], []
    for combo in itertools.product(range(2), repeat=rho.n_qubits):
        w = np.prod([per_qubit[q][0][i] for q, i in enumerate(combo)])
        if w > 0:
            weights.append(w)
            factors.append([per_qubit[q][1][i] for q, i in enumerate(combo)])
    weights = np.array(weights)
    return SeparableEnsemble(weights / weights.sum(), np.array(factors))


def _separable_result(rho, ensemble, zero_floor):
    return ReeResult(value=0., sigma_star=rho, iterations=0, restarts_used=0, converged=True, spread=0.,
                     ensemble=ensemble, zero_floor=zero_floor)


def _solve(problem, init, options):
    weights, theta, phi = _to_batch(init)
    B, m, n = theta.shape
    with torch.no_grad():
        f = _objective(problem, weights, theta, phi)
    eta, t = torch.ones(B, dtype=RDTYPE), torch.ones(B, dtype=RDTYPE)
    everyone = torch.ones(B, dtype=torch.bool)
    warmup = min(options.warmup, options.max_iters)

    with tqdm(total=options.max_iters, disable=not options.verbose) as bar:
        for _ in range(warmup):
            weights, f, eta, _ = _weight_step(problem, weights, theta, phi, f, eta, everyone)
            theta, phi, f, t, _ = _factor_step(problem, weights, theta, phi, f, t, everyone)
            bar.update(1)
        x, f, iterations, converged = _quasi_newton(problem, _pack(weights, theta, phi), m, n, options,
                                                    options.max_iters - warmup, bar)
    weights, theta, phi = _unpack(x, m, n)
    return weights, theta, phi, f, iterations + warmup, converged


def ree(rho, options=None):
    """ upper bound on the relative entropy of entanglement of a 2- or 3-qubit state """
    options = options or ReeOptions()
    rho = as_density(rho)
    n = rho.n_qubits
    if n not in (2, 3):
        raise ValueError(f'relative entropy of entanglement is implemented for 2 or 3 qubits, got {n=}')

    if rho.is_diagonal():
        return _separable_result(rho, _classical_ensemble(rho), options.zero_floor)
    if trace_distance(rho, product_of_marginals(rho)) <= PRODUCT_TOL:
        return _separable_result(product_of_marginals(rho), _product_ensemble(rho), options.zero_floor)

    # solve on a canonical qubit order so that permuted inputs share one trajectory
    perm = _canonical_permutation(rho)
    inverse = list(np.argsort(perm))
    canonical = permute_qubits(rho, perm)

    m = options.ensemble_size(n)
    init = [SeparableEnsemble.random(n, m, np.random.default_rng(options.seed + r)) for r in range(options.restarts)]
    weights, theta, phi, f, iterations, converged = _solve(_problem(canonical), init, options)

    best = int(torch.argmin(f))
    ensemble = _from_batch(weights, theta, phi, best).permuted(inverse)
    sigma_star = ensemble.sigma(MIXING)
    value = relative_entropy(rho, sigma_star)
    ok = bool(converged[best])
    if not np.isfinite(value):
        value, ok = max(float(f[best]), 0.), False
    if options.verbose:
        print(f' >> ree: {value=:.10f} after {int(iterations[best])} iterations '
              f'(spread {float(f.max() - f.min()):.2e}, {"converged" if ok else "NOT converged"})')
    return ReeResult(value=value, sigma_star=sigma_star, iterations=int(iterations[best]), restarts_used=options.restarts,
                     converged=ok, spread=float(f.max() - f.min()), ensemble=ensemble, zero_floor=options.zero_floor)

"""Tests for the posterior, the loss, samplers and the training step."""

import numpy as np
import pytest

from tfdiff.config import ScheduleConfig, TrainConfig
from tfdiff.diffusion.forward import (
    NoiseDraw,
    complex_normal,
    destruct_step,
    destruct_to,
    destruct_to_batch,
)
from tfdiff.diffusion.reverse import (
    OptimizerState,
    PosteriorOracle,
    TrainingBatch,
    posterior_mean,
    posterior_params,
    posterior_std,
    sample,
    sample_batch,
    train_step,
    training_loss,
)
from tfdiff.diffusion.schedule import DiffusionSchedule, build_schedule
from tfdiff.errors import ConditionError, InvalidSignalError, NonFiniteLossError, StepOutOfRangeError
from tfdiff.models import ConditionLabel, LabeledSequence
from tfdiff.nn.hdt import HdtModel
from tfdiff.signal.metrics import complex_ssim
from tfdiff.signal.sequence import ComplexSequence
from tfdiff.utils import make_rng


def _labeled(data: np.ndarray, label: dict[str, str] | None = None) -> LabeledSequence:
    return LabeledSequence(
        sequence=ComplexSequence(data=data), condition=ConditionLabel(values=label or {})
    )


def test_posterior_at_first_step_is_exact(small_schedule: DiffusionSchedule, rng: np.random.Generator) -> None:
    """t = 1 returns (x0, 0) exactly."""
    x0 = ComplexSequence(data=complex_normal(rng, (2, 16)))
    x_t = ComplexSequence(data=complex_normal(rng, (2, 16)))
    params = posterior_params(x_t, x0, 1, small_schedule)
    np.testing.assert_array_equal(params.mu_tilde, x0.data)
    np.testing.assert_array_equal(params.sigma_tilde, np.zeros(16))


def test_posterior_is_identity_on_noiseless_path(
    small_schedule: DiffusionSchedule, rng: np.random.Generator
) -> None:
    """On a noiseless trajectory the posterior mean is the previous state."""
    sched = small_schedule
    x0 = ComplexSequence(data=complex_normal(rng, (2, 16)))
    zeros = NoiseDraw.zeros(2, 16)
    for t in (2, 5, sched.T):
        x_t = destruct_to(x0, t, sched, zeros)
        x_prev = destruct_to(x0, t - 1, sched, zeros)
        np.testing.assert_allclose(
            posterior_params(x_t, x0, t, sched).mu_tilde, x_prev.data, rtol=1e-10, atol=1e-12
        )


@pytest.mark.parametrize("t", [2, 3, 10])
def test_posterior_matches_numerical_bayes(t: int) -> None:
    """Closed-form mean and std agree with a grid evaluation of Bayes' rule."""
    sched = build_schedule(ScheduleConfig(N=1))
    x0 = 0.8
    x_t = float(sched.gamma_bar[t, 0] * x0 + 0.7 * sched.sigma_bar[t, 0])

    prior_mean = float(sched.gamma_bar[t - 1, 0] * x0)
    prior_var = float(sched.sigma_bar[t - 1, 0] ** 2)
    step_var = float(sched.sigma[t] ** 2)
    gamma = float(sched.gamma[t, 0])
    # Real part of a CN(mu, s^2) variable has density proportional to exp(-(x - mu)^2 / s^2)
    half_width = 8.0 * np.sqrt(prior_var / 2.0)
    grid = np.linspace(prior_mean - half_width, prior_mean + half_width, 4001)
    log_density = -((x_t - gamma * grid) ** 2) / step_var - (grid - prior_mean) ** 2 / prior_var
    weights = np.exp(log_density - log_density.max())
    weights /= weights.sum()
    grid_mean = float(np.sum(weights * grid))
    grid_std = float(np.sqrt(2.0 * np.sum(weights * (grid - grid_mean) ** 2)))

    params = posterior_params(
        ComplexSequence(data=[[x_t]]), ComplexSequence(data=[[x0]]), t, sched
    )
    assert params.mu_tilde[0, 0].real == pytest.approx(grid_mean, rel=1e-3)
    assert params.sigma_tilde[0] == pytest.approx(grid_std, rel=1e-3)


def test_posterior_std_formula(small_schedule: DiffusionSchedule) -> None:
    """sigma_tilde = sigma_bar_{t-1} sigma_t / sigma_bar_t, always below sigma_bar_{t-1}."""
    sched = small_schedule
    for t in range(2, sched.T + 1):
        std = posterior_std(t, sched)
        np.testing.assert_allclose(std, sched.sigma_bar[t - 1] * sched.beta[t] / sched.sigma_bar[t])
        assert np.all(std <= sched.sigma_bar[t - 1])


def test_posterior_batched_steps(small_schedule: DiffusionSchedule, rng: np.random.Generator) -> None:
    """Per-item steps in a batch give the same result as scalar calls."""
    x0 = complex_normal(rng, (3, 2, 16))
    x_t = complex_normal(rng, (3, 2, 16))
    t = np.array([2, 9, 20])
    batched = posterior_mean(x_t, x0, t, small_schedule)
    for i in range(3):
        np.testing.assert_allclose(
            batched[i], posterior_mean(x_t[i], x0[i], int(t[i]), small_schedule), rtol=1e-14
        )


def test_posterior_rejects_bad_input(small_schedule: DiffusionSchedule) -> None:
    """Out-of-range steps and mismatched shapes are errors."""
    x = ComplexSequence.zeros(2, 16)
    with pytest.raises(StepOutOfRangeError):
        posterior_params(x, x, 0, small_schedule)
    with pytest.raises(InvalidSignalError):
        posterior_params(x, ComplexSequence.zeros(1, 16), 2, small_schedule)


def test_batched_posterior_rejects_bad_steps(small_schedule: DiffusionSchedule) -> None:
    """Every step of a batch is range-checked, not only scalar steps."""
    x = np.zeros((3, 2, 16), dtype=np.complex128)
    with pytest.raises(StepOutOfRangeError):
        posterior_mean(x, x, np.array([2, 0, 5]), small_schedule)
    with pytest.raises(StepOutOfRangeError):
        posterior_mean(x, x, np.array([1, 2, small_schedule.T + 1]), small_schedule)


@pytest.mark.slow
@pytest.mark.parametrize("t", [2, 40])
def test_posterior_consistent_with_forward_trajectories(
    desk_schedule: DiffusionSchedule, t: int
) -> None:
    """Along forward trajectories x_{t-1} - mu_tilde is CN(0, sigma_tilde^2).

    Averaged over the noise, mu_tilde equals gamma_bar_{t-1} x0.
    """
    sched = desk_schedule
    draws, n = 100_000, sched.N
    rng = make_rng(30 + t)
    x0 = np.tile(complex_normal(make_rng(31), (1, n)), (draws, 1))
    x_prev = destruct_to(ComplexSequence(data=x0), t - 1, sched, NoiseDraw.draw(rng, draws, n))
    x_t = destruct_step(x_prev, t, sched, NoiseDraw.draw(rng, draws, n))
    mu = posterior_mean(x_t.data, x0, t, sched)
    std = posterior_std(t, sched)

    z = (x_prev.data - mu) / std
    count = draws * n
    assert abs(complex(np.mean(z))) < 3.0 / np.sqrt(count)
    assert abs(float(np.mean(np.abs(z) ** 2)) - 1.0) < 3.0 / np.sqrt(count)

    # total variance: Var(x_{t-1}) = Var(mu_tilde) + sigma_tilde^2
    spread = np.sqrt((sched.sigma_bar[t - 1] ** 2 - std**2) / draws)
    drift = (np.mean(mu, axis=0) - sched.gamma_bar[t - 1] * x0[0]) / spread
    assert float(np.max(np.abs(drift))) < 5.0


def test_training_loss_reference_values() -> None:
    """Exact prediction scores 0; a unit offset everywhere scores 1."""
    mu = ComplexSequence(data=np.arange(8).reshape(2, 4) * (1 - 0.5j))
    assert training_loss(mu, mu) == 0.0
    assert training_loss(ComplexSequence(data=mu.data + 1.0), mu) == pytest.approx(1.0)
    with pytest.raises(InvalidSignalError):
        training_loss(mu.data, mu.data[:1])


def test_oracle_two_point_frequencies() -> None:
    """Sampling a symmetric two-point law lands on each point about half the time."""
    sched = build_schedule(ScheduleConfig.preset("desk", N=1))
    oracle = PosteriorOracle([_labeled(np.array([[1.0]])), _labeled(np.array([[-1.0]]))], sched)
    draws = 10_000
    out = sample_batch(oracle, [ConditionLabel()] * draws, sched, make_rng(0, 4))
    assert out.shape == (draws, 1, 1)
    np.testing.assert_allclose(np.abs(out), 1.0, atol=1e-6)
    positive = int(np.sum(out.real > 0))
    assert abs(positive - draws / 2) <= 3.0 * np.sqrt(draws * 0.25)


def test_oracle_single_step_recovers_exemplar(rng: np.random.Generator) -> None:
    """With T = 1 the sampler returns the only exemplar exactly."""
    sched = build_schedule(ScheduleConfig(T=1, N=4))
    exemplar = complex_normal(rng, (2, 4))
    oracle = PosteriorOracle([_labeled(exemplar)], sched)
    out = sample(oracle, ConditionLabel(), sched, make_rng(1))
    np.testing.assert_array_equal(out.data, exemplar)


def test_oracle_conditional_sampling(desk_schedule: DiffusionSchedule, rng: np.random.Generator) -> None:
    """One exemplar per class: each class samples back its own exemplar."""
    sched = desk_schedule
    a = complex_normal(rng, (2, 16))
    b = complex_normal(rng, (2, 16))
    oracle = PosteriorOracle([_labeled(a, {"class": "a"}), _labeled(b, {"class": "b"})], sched)
    out_a = sample(oracle, ConditionLabel(values={"class": "a"}), sched, make_rng(2))
    out_b = sample(oracle, ConditionLabel(values={"class": "b"}), sched, make_rng(3))
    assert complex_ssim(out_a, ComplexSequence(data=a)) >= 0.99
    assert complex_ssim(out_b, ComplexSequence(data=b)) >= 0.99


def test_oracle_unknown_condition(small_schedule: DiffusionSchedule) -> None:
    """Sampling a condition without exemplars fails before any work."""
    oracle = PosteriorOracle([_labeled(np.ones((1, 16)), {"class": "a"})], small_schedule)
    with pytest.raises(ConditionError, match="No exemplars"):
        sample(oracle, ConditionLabel(values={"class": "z"}), small_schedule, make_rng(0))


def test_oracle_rejects_length_mismatch(small_schedule: DiffusionSchedule) -> None:
    """Exemplars must match the schedule length."""
    with pytest.raises(InvalidSignalError):
        PosteriorOracle([_labeled(np.ones((1, 8)))], small_schedule)


def test_hdt_sampling_is_deterministic(tiny_train_config: TrainConfig) -> None:
    """Same model, condition and seed give identical samples."""
    sched = build_schedule(tiny_train_config.schedule)
    model = HdtModel(tiny_train_config.model, seed=3)
    label = ConditionLabel(values={"class": "1"})
    first = sample(model, label, sched, make_rng(9, 4))
    second = sample(model, label, sched, make_rng(9, 4))
    assert first.shape == (2, 8)
    assert first == second


def test_hdt_sampling_unknown_condition(tiny_train_config: TrainConfig) -> None:
    """A value outside the vocabulary is rejected."""
    sched = build_schedule(tiny_train_config.schedule)
    model = HdtModel(tiny_train_config.model)
    with pytest.raises(ConditionError):
        sample(model, ConditionLabel(values={"class": "7"}), sched, make_rng(0))


def _batch(model: HdtModel, dataset: list[LabeledSequence]) -> TrainingBatch:
    return TrainingBatch(
        x0=np.stack([item.sequence.data for item in dataset]),
        condition_indices=model.condition_embedding.encode_batch([i.condition for i in dataset]),
        item_ids=[item.item_id for item in dataset],
    )


def test_train_step_fresh_model_loss(
    tiny_train_config: TrainConfig, tiny_dataset: list[LabeledSequence]
) -> None:
    """A fresh model predicts x_t, so the first loss is mean |x_t - mu_tilde|^2."""
    cfg = tiny_train_config
    sched = build_schedule(cfg.schedule)
    model = HdtModel(cfg.model, seed=cfg.seed)
    batch = _batch(model, tiny_dataset)
    result = train_step(model, batch, sched, make_rng(0, 1), OptimizerState(model, cfg), cfg)

    replay = make_rng(0, 1)
    t = replay.integers(1, sched.T + 1, size=len(tiny_dataset))
    eps = complex_normal(replay, batch.x0.shape)
    x_t = destruct_to_batch(batch.x0, t, sched, eps)
    expected = float(np.mean(np.abs(x_t - posterior_mean(x_t, batch.x0, t, sched)) ** 2))

    assert result.step == 1
    assert result.t == t.tolist()
    assert result.loss == pytest.approx(expected, rel=1e-12)
    assert result.lr == cfg.lr


def test_train_step_updates_parameters(
    tiny_train_config: TrainConfig, tiny_dataset: list[LabeledSequence]
) -> None:
    """One step moves the zero-initialized output projection off zero."""
    cfg = tiny_train_config
    sched = build_schedule(cfg.schedule)
    model = HdtModel(cfg.model, seed=cfg.seed)
    train_step(model, _batch(model, tiny_dataset), sched, make_rng(0, 1), OptimizerState(model, cfg), cfg)
    assert np.any(model.temporal_out.weight.data != 0.0)


def test_train_step_is_deterministic(
    tiny_train_config: TrainConfig, tiny_dataset: list[LabeledSequence]
) -> None:
    """Identical seeds give identical losses and weights."""
    cfg = tiny_train_config
    sched = build_schedule(cfg.schedule)
    states = []
    losses = []
    for _ in range(2):
        model = HdtModel(cfg.model, seed=cfg.seed)
        state = OptimizerState(model, cfg)
        rng = make_rng(cfg.seed, 1)
        batch = _batch(model, tiny_dataset)
        losses.append([train_step(model, batch, sched, rng, state, cfg).loss for _ in range(3)])
        states.append(model.state_dict())
    assert losses[0] == losses[1]
    for name, value in states[0].items():
        np.testing.assert_array_equal(value, states[1][name])


def test_train_step_non_finite_loss(
    tiny_train_config: TrainConfig, tiny_dataset: list[LabeledSequence]
) -> None:
    """A NaN input aborts the step with diagnostics."""
    cfg = tiny_train_config
    sched = build_schedule(cfg.schedule)
    model = HdtModel(cfg.model, seed=cfg.seed)
    batch = _batch(model, tiny_dataset)
    batch.x0[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLossError) as exc_info:
        train_step(model, batch, sched, make_rng(0, 1), OptimizerState(model, cfg), cfg)
    assert "t" in exc_info.value.diagnostics
    assert exc_info.value.diagnostics["items"] == batch.item_ids

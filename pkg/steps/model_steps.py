"""
예측/적응 네트워크와 학습 루프 Step Definitions
"""
import json
import logging

import numpy as np
from pytest_bdd import given, when, then, parsers

from models.adaptation_network import AdaptationNet
from models.base_network import BaseNetwork
from models.lstm_network import MultiPathNet, PathSpec
from models.training import TrainConfig, ensemble_band, gradient_check, train
from steps.common_steps import assert_close, capture_error, parse_values

logger = logging.getLogger(__name__)


def _random_network(rng: np.random.Generator, seed: int) -> MultiPathNet:
    """피처 1~3개, 경로 1~2개, 층 1~2개의 작은 네트워크"""
    n_features = int(rng.integers(1, 4))
    hidden = int(rng.integers(2, 6))
    depth = int(rng.integers(1, 3))
    if n_features >= 2 and rng.random() < 0.5:
        split = int(rng.integers(1, n_features))
        paths = [
            PathSpec("a", tuple(range(split)), hidden, depth),
            PathSpec("b", tuple(range(split, n_features)), int(rng.integers(2, 6)), 1),
        ]
    else:
        paths = [PathSpec("all", tuple(range(n_features)), hidden, depth)]
    return MultiPathNet(paths, n_features, seed=seed)


# ============================================
# 기울기 검증
# ============================================
@when(parsers.parse("무작위 네트워크 {count:d}개의 기울기를 epsilon {epsilon:g}로 검증한다"))
def gradient_check_random_networks(bdd_context, count, epsilon):
    rng = np.random.default_rng(404)
    errors = []
    for seed in range(count):
        net = _random_network(rng, seed)
        window_length = int(rng.integers(3, 7))
        window = rng.uniform(0.0, 1.0, size=(window_length, net.n_features))
        target = rng.uniform(0.0, 1.0, size=net.output_length)
        errors.append(gradient_check(net, window, target, epsilon=epsilon))
    logger.info(f"기울기 검증 결과: 최대 {max(errors):.3e}")
    bdd_context['gradient_errors'] = errors


@when(parsers.parse("출력층을 무작위로 채운 적응 네트워크 {count:d}개의 기울기를 검증한다"))
def gradient_check_adaptation_networks(bdd_context, count):
    rng = np.random.default_rng(405)
    errors = []
    for seed in range(count):
        net = AdaptationNet(hidden_size=int(rng.integers(2, 8)), log_scale=float(rng.uniform(0.5, 3.0)), seed=seed)
        net.params["out.W"] = rng.normal(0.0, 0.5, size=net.params["out.W"].shape)
        net.params["out.b"] = rng.normal(0.0, 0.1, size=1)
        raw = rng.uniform(10.0, 1000.0, size=14)
        inputs = AdaptationNet.stack_inputs(raw, rng.uniform(0.0, 0.7, size=14), rng.uniform(1.0, 1.6, size=14))
        target = raw * rng.uniform(0.5, 1.0, size=14)
        errors.append(gradient_check(net, inputs[0], target))
    bdd_context['gradient_errors'] = errors


@then("모든 네트워크의 최대 상대 오차는 1e-4 미만이다")
def gradient_errors_below_tolerance(bdd_context):
    errors = bdd_context['gradient_errors']
    assert max(errors) < 1e-4, f"기울기 상대 오차: {errors}"


# ============================================
# 순전파
# ============================================
@given(parsers.parse("피처 {n_features:d}개, 은닉 {hidden:d}, 윈도우 {window:d}일의 단일 경로 네트워크"))
def single_path_network(bdd_context, n_features, hidden, window):
    bdd_context['net'] = MultiPathNet.single_path(n_features, hidden_size=hidden, seed=3)
    bdd_context['network_shape'] = (n_features, hidden)
    bdd_context['window_length'] = window


@when("모든 파라미터를 0으로 두고 기울기를 계산한다")
def zero_parameter_gradients(bdd_context):
    net = bdd_context['net']
    net.set_flat(np.zeros(net.num_parameters))
    window = np.random.default_rng(1).uniform(size=(bdd_context['window_length'], net.n_features))
    target = np.linspace(0.1, 1.4, net.output_length)
    _, grads = net.loss_and_grads(window[None], target[None])
    bdd_context['grads'] = grads
    bdd_context['target'] = target


@then("head bias 기울기는 -2·타깃/14이다")
def head_bias_gradient_matches(bdd_context):
    expected = -2.0 * bdd_context['target'] / 14.0
    assert_close(bdd_context['grads']["head.b"], expected, tol=1e-15)


@when("무작위 윈도우로 순전파한다")
def forward_random_window(bdd_context):
    net = bdd_context['net']
    window = np.random.default_rng(2).uniform(size=(bdd_context['window_length'], net.n_features))
    bdd_context['window'] = window
    bdd_context['output'] = net.forward(window)


@then(parsers.parse("출력 길이는 {length:d}이다"))
def output_length_is(bdd_context, length):
    assert bdd_context['output'].shape == (length,)


@then("배치 순전파의 첫 행과 같다")
def forward_matches_batch(bdd_context):
    batch = np.stack([bdd_context['window'], bdd_context['window'] * 0.5])
    assert_close(bdd_context['net'].forward_batch(batch)[0], bdd_context['output'], tol=1e-15)


@when(parsers.parse("피처 {n_features:d}개짜리 윈도우로 순전파한다"))
def forward_wrong_width(bdd_context, n_features):
    window = np.zeros((bdd_context['window_length'], n_features))
    capture_error(bdd_context, lambda: bdd_context['net'].forward(window))


@when("NaN이 섞인 윈도우로 순전파한다")
def forward_with_nan(bdd_context):
    net = bdd_context['net']
    window = np.zeros((bdd_context['window_length'], net.n_features))
    window[2, 0] = np.nan
    capture_error(bdd_context, lambda: net.forward(window))


@when(parsers.parse('컬럼 "{first}"과 "{second}"를 받는 두 경로로 피처 {n_features:d}개 네트워크를 만든다'))
def overlapping_paths(bdd_context, first, second, n_features):
    paths = [
        PathSpec("first", tuple(int(v) for v in first.split(","))),
        PathSpec("second", tuple(int(v) for v in second.split(","))),
    ]
    capture_error(bdd_context, lambda: MultiPathNet(paths, n_features))


@when(parsers.parse("seed {seed:d}로 네트워크 두 개를 만든다"))
def two_networks_same_seed(bdd_context, seed):
    paths = [PathSpec("g1", (0, 1), 4), PathSpec("g2", (2,), 3)]
    bdd_context['paths'] = paths
    bdd_context['nets'] = [MultiPathNet(paths, 3, seed=seed), MultiPathNet(paths, 3, seed=seed)]


@then("두 네트워크의 파라미터는 같다")
def network_params_equal(bdd_context):
    first, second = bdd_context['nets']
    assert np.array_equal(first.get_flat(), second.get_flat())


@then(parsers.parse("seed {seed:d} 네트워크의 파라미터는 다르다"))
def network_params_differ(bdd_context, seed):
    other = MultiPathNet(bdd_context['paths'], 3, seed=seed)
    assert not np.array_equal(other.get_flat(), bdd_context['nets'][0].get_flat())


# ============================================
# 학습
# ============================================
@given("사인파에서 만든 학습 윈도우")
def sine_training_windows(bdd_context):
    net = bdd_context['net']
    W = bdd_context['window_length']
    days = np.arange(120)
    signal = 0.5 + 0.4 * np.sin(days / 6.0)
    matrix = np.column_stack([signal] + [np.cos(days / 9.0) * 0.5 + 0.5] * (net.n_features - 1))
    windows = []
    for start in range(0, len(days) - W - net.output_length + 1):
        windows.append((matrix[start:start + W], signal[start + W:start + W + net.output_length]))
    bdd_context['windows'] = windows


@when(parsers.parse("{epochs:d} 에폭 학습한다"))
def train_epochs(bdd_context, epochs):
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=epochs, learning_rate=0.01,
                         batch_size=16, hidden_size=4)
    _, bdd_context['report'] = train(bdd_context['net'], bdd_context['windows'], config, label="sine")


@then("최종 손실은 초기 손실보다 작다")
def final_loss_below_initial(bdd_context):
    report = bdd_context['report']
    assert report.final_loss < report.initial_loss, f"{report.initial_loss} → {report.final_loss}"
    assert report.decrease_ratio > 0


@then(parsers.parse("손실 곡선 길이는 {length:d}이다"))
def loss_curve_length_is(bdd_context, length):
    assert len(bdd_context['report'].loss_curve) == length


def _fresh_network(bdd_context) -> MultiPathNet:
    n_features, hidden = bdd_context['network_shape']
    return MultiPathNet.single_path(n_features, hidden_size=hidden, seed=3)


@when("같은 윈도우를 다른 윈도우 순전파 전후로 두 번 순전파한다")
def forward_twice(bdd_context):
    net = bdd_context['net']
    rng = np.random.default_rng(12)
    window = rng.uniform(size=(bdd_context['window_length'], net.n_features))
    other = rng.uniform(size=(bdd_context['window_length'] + 3, net.n_features))
    params_before = net.get_flat()
    first = net.forward(window)
    net.forward(other)
    second = net.forward(window)
    bdd_context['forward_pair'] = (first, second)
    bdd_context['params_before'] = params_before


@then("두 출력은 같고 파라미터는 그대로이다")
def forward_is_pure(bdd_context):
    first, second = bdd_context['forward_pair']
    assert np.array_equal(first, second)
    assert np.array_equal(bdd_context['net'].get_flat(), bdd_context['params_before'])


@when(parsers.parse("같은 seed의 새 네트워크로 {epochs:d} 에폭씩 두 번 학습한다"))
def train_twice_same_seed(bdd_context, epochs):
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=epochs, learning_rate=0.01,
                         batch_size=16, seed=11)
    runs = []
    for _ in range(2):
        net, report = train(_fresh_network(bdd_context), bdd_context['windows'], config)
        runs.append((report.loss_curve, net.get_flat()))
    bdd_context['training_runs'] = runs


@when(parsers.parse("학습 윈도우를 원래 순서와 뒤집은 순서로 각각 {epochs:d} 에폭 학습한다"))
def train_with_reversed_windows(bdd_context, epochs):
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=epochs, learning_rate=0.01,
                         batch_size=16, seed=11)
    windows = bdd_context['windows']
    runs = []
    for ordered in (windows, list(reversed(windows))):
        net, report = train(_fresh_network(bdd_context), ordered, config)
        runs.append((report.loss_curve, net.get_flat()))
    bdd_context['training_runs'] = runs


@then("두 손실 곡선과 학습된 파라미터가 같다")
def training_runs_identical(bdd_context):
    (curve_a, params_a), (curve_b, params_b) = bdd_context['training_runs']
    assert curve_a == curve_b, f"손실 곡선 불일치: {curve_a} != {curve_b}"
    assert np.array_equal(params_a, params_b)


@when(parsers.parse("학습률 {learning_rate:g}의 SGD로 {epochs:d} 에폭 학습한다"))
def train_with_small_sgd(bdd_context, learning_rate, epochs):
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=epochs,
                         learning_rate=learning_rate, optimizer="sgd", batch_size=16, seed=11)
    _, bdd_context['report'] = train(_fresh_network(bdd_context), bdd_context['windows'], config)


@then(parsers.parse("손실이 직전 에폭보다 커진 에폭은 {percent:d}% 이하이다"))
def loss_rises_are_rare(bdd_context, percent):
    curve = np.array(bdd_context['report'].loss_curve)
    rises = int(np.sum(np.diff(curve) > 0))
    allowed = (len(curve) - 1) * percent // 100
    assert rises <= allowed, f"손실 상승 에폭 {rises}개 (허용 {allowed}개)"


@when(parsers.parse("학습률 0으로 {epochs:d} 에폭 학습한다"))
def train_with_zero_learning_rate(bdd_context, epochs):
    net = bdd_context['net']
    bdd_context['params_before'] = net.get_flat()
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=epochs, learning_rate=0.0, optimizer="sgd")
    train(net, bdd_context['windows'], config)


@then("파라미터는 학습 전과 같다")
def params_unchanged(bdd_context):
    assert np.array_equal(bdd_context['net'].get_flat(), bdd_context['params_before'])


@when("무한대 타깃으로 학습한다")
def train_with_infinite_target(bdd_context):
    net = bdd_context['net']
    window = np.zeros((bdd_context['window_length'], net.n_features))
    target = np.full(net.output_length, np.inf)
    config = TrainConfig(window_length=bdd_context['window_length'], epochs=1)
    capture_error(bdd_context, lambda: train(net, [(window, target)], config))


# ============================================
# 체크포인트 / 적응 / 앙상블
# ============================================
@when("체크포인트로 저장한 뒤 다시 읽는다")
def save_and_load_checkpoint(bdd_context, tmp_path):
    net = bdd_context['net']
    metadata = {"feature_columns": ["dpc", "sc"], "seed": 3}
    path = net.save(tmp_path / "net.npz", metadata=metadata)
    restored, loaded_metadata = MultiPathNet.load(path)
    bdd_context['checkpoint_path'] = path
    bdd_context['restored'] = restored
    bdd_context['metadata'] = (metadata, loaded_metadata)


@then("복원한 네트워크의 예측은 원래 예측과 같다")
def restored_predictions_match(bdd_context):
    net = bdd_context['net']
    window = np.random.default_rng(5).uniform(size=(bdd_context['window_length'], net.n_features))
    assert np.array_equal(net.forward(window), bdd_context['restored'].forward(window))


@then("체크포인트 metadata가 보존된다")
def checkpoint_metadata_preserved(bdd_context):
    saved, loaded = bdd_context['metadata']
    assert json.loads(json.dumps(saved)) == loaded
    header, _ = BaseNetwork.read_checkpoint(bdd_context['checkpoint_path'])
    assert header["kind"] == MultiPathNet.kind


@when("학습하지 않은 적응 네트워크로 예측 블록을 보정한다")
def adapt_with_untrained_network(bdd_context):
    net = AdaptationNet(hidden_size=8, log_scale=5.0, seed=1)
    raw = np.linspace(100.0, 400.0, 14)
    inputs = AdaptationNet.stack_inputs(raw, np.full(14, 0.4), np.full(14, 1.3))
    bdd_context['raw_block'] = raw
    bdd_context['adapted_block'] = net.adapt(inputs)[0]


@then("보정된 블록은 원래 블록과 같다")
def adapted_equals_raw(bdd_context):
    assert_close(bdd_context['adapted_block'], bdd_context['raw_block'], tol=1e-9)


@when(parsers.parse('멤버 예측 "{members}"의 밴드를 계산한다'))
def compute_ensemble_band(bdd_context, members):
    bdd_context['band'] = ensemble_band(np.array(json.loads(members), dtype=float))


@then(parsers.parse('하한은 "{lower}"이고 상한은 "{upper}"이다'))
def band_is(bdd_context, lower, upper):
    low, high = bdd_context['band']
    assert_close(low, parse_values(lower), tol=1e-12)
    assert_close(high, parse_values(upper), tol=1e-12)

import pytest

from src.core.config import RunConfig
from src.core.config_manager import ConfigManager, config_manager
from src.core.errors import ConfigError
from src.utils.random_utils import SEED_ENV_VAR, resolve_seed, spawn_seeds


def test_defaults_validate():
    config = RunConfig.from_dict({})
    assert config.scene.grid_size == 64
    assert config.reward.beta3 == -1.0
    assert config.obp.embed_dim == 64


def test_presets_are_discovered():
    assert {'desk', 'full', 'tiny'} <= set(config_manager.preset_names())
    tiny = config_manager.get_preset('tiny')
    assert tiny.scene.grid_size == 16


def test_unknown_preset_and_keys_rejected():
    with pytest.raises(ConfigError):
        config_manager.get_preset('missing')
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'scene': {'grid_sise': 64}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'bogus': {}})


@pytest.mark.parametrize('section, key, value', [
    ('scene', 'crop_size', 24),
    ('transporter', 'tau', 1.0),
    ('reward', 'epsilon', 0.0),
    ('transporter', 'n_rotations', 6),
    ('obp', 'baseline', 'rollout'),
])
def test_range_checks(section, key, value):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({section: {key: value}})


def test_n_rotations_must_be_multiple_of_orientations():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({'transporter': {'n_rotations': 4}})
    config = RunConfig.from_dict({'transporter': {'n_rotations': 8}, 'scene': {'num_orientations': 4}})
    assert config.transporter.n_rotations == 8


def test_overrides_parse_yaml_scalars():
    config = RunConfig().with_overrides(['reward.beta1=2', 'transporter.key_widths=[4, 4]', 'eval.serialize_timing=true'])
    assert config.reward.beta1 == 2
    assert config.transporter.key_widths == [4, 4]
    assert config.eval.serialize_timing is True
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(['reward.beta9=1'])
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(['reward'])


def test_yaml_file_extends_preset(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('preset: tiny\nobp:\n  interactions: 3\n')
    config = ConfigManager().load(path)
    assert config.scene.grid_size == 16
    assert config.obp.interactions == 3


def test_bad_yaml_is_config_error(tmp_path):
    path = tmp_path / 'broken.yaml'
    path.write_text('scene: [unclosed\n')
    with pytest.raises(ConfigError):
        ConfigManager().load(path)


def test_seed_resolution(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert resolve_seed(None, 5) == 5
    monkeypatch.setenv(SEED_ENV_VAR, '9')
    assert resolve_seed(None, 5) == 9
    assert resolve_seed(3, 5) == 3


def test_spawned_seeds_are_prefix_stable():
    assert spawn_seeds(4, 3) == spawn_seeds(4, 5)[:3]
    assert len(set(spawn_seeds(4, 50))) == 50


def test_learning_rate_defaults_and_desk_override():
    defaults = RunConfig.from_dict({})
    assert defaults.transporter.learning_rate == 1e-4
    assert defaults.obp.learning_rate == 1e-4
    assert not defaults.obp.sign_preserving_advantage
    full = config_manager.get_preset('full')
    assert full.transporter.learning_rate == full.obp.learning_rate == 1e-4
    desk = config_manager.get_preset('desk')
    assert desk.transporter.learning_rate == desk.obp.learning_rate == 1e-3
    assert desk.obp.sign_preserving_advantage and desk.obp.baseline == 'greedy'

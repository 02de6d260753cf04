import json
import os

import pytest

from src.models.config import (ExperimentConfig, NormalFormSection, confine_path, env_threads, load_config,
                               parse_config)
from src.models.errors import ConfigError


class TestParse:

    def test_defaults(self):
        config = parse_config({})
        assert config.seed == 0
        assert config.normal_form is None
        assert config.simulate.initial.norm == 'h1'

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config({'seed': 1, 'sede': 2})
        assert 'sede' in str(info.value)

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config({'simulate': {'initial': {'amplitude': 0.1, 'shape': 'gauss'}}})
        assert 'config.simulate.initial' in str(info.value)

    def test_lists_become_tuples(self):
        config = parse_config({'scan': {'monte_carlo': {'gammas': [0.001, 1]}}, 'simulate': {'s_list': [0, 1]}})
        assert config.scan.monte_carlo.gammas == (0.001, 1.0)
        assert config.simulate.s_list == (0.0, 1.0)

    def test_wrong_types(self):
        with pytest.raises(ConfigError):
            parse_config({'seed': 'sete'})
        with pytest.raises(ConfigError):
            parse_config({'simulate': {'dealias': 1}})
        with pytest.raises(ConfigError):
            parse_config([1, 2])

    def test_seed_range(self):
        assert parse_config({'seed': 2 ** 64 - 1}).seed == 2 ** 64 - 1
        with pytest.raises(ConfigError):
            parse_config({'seed': 2 ** 64})

    def test_normal_form_pairing(self):
        assert NormalFormSection(r=2, nu=0.1).r == 2
        assert NormalFormSection(eps=1e-12).eps == 1e-12
        with pytest.raises(ConfigError):
            NormalFormSection(r=2)
        with pytest.raises(ConfigError):
            NormalFormSection()
        with pytest.raises(ConfigError):
            parse_config({'normal_form': {'r': 2, 'nu': 0.1, 'sigma': 0.5}})


class TestHash:

    def test_ignores_output_dir(self):
        a = parse_config({'seed': 3, 'output_dir': 'a'})
        b = parse_config({'seed': 3, 'output_dir': 'b'})
        assert a.config_hash == b.config_hash
        assert len(a.config_hash) == 64

    def test_changes_with_seed(self):
        assert parse_config({'seed': 3}).config_hash != parse_config({'seed': 4}).config_hash

    def test_stable_across_key_order(self):
        a = parse_config({'seed': 1, 'scan': {'k_max': 4, 'q_max': 2}})
        b = parse_config({'scan': {'q_max': 2, 'k_max': 4}, 'seed': 1})
        assert a.config_hash == b.config_hash


class TestFiles:

    def test_load(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'seed': 9, 'potential': {'n_max': 3}}))
        config = load_config(str(path))
        assert config.seed == 9 and config.potential.n_max == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / 'absent.json'))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_text('{seed: 9}')
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_output_path(self, tmp_path):
        (tmp_path / 'runs').mkdir()
        config = ExperimentConfig(output_dir='runs')
        assert config.output_path(str(tmp_path)) == os.path.realpath(tmp_path / 'runs')
        with pytest.raises(ConfigError):
            ExperimentConfig(output_dir='missing').output_path(str(tmp_path))

    def test_not_utf8(self, tmp_path):
        path = tmp_path / 'config.json'
        path.write_bytes(b'{"seed": "\xff\xfe"}')
        with pytest.raises(ConfigError):
            load_config(str(path))

    @pytest.mark.parametrize('output_dir', ['/tmp', '..', 'runs/../..'])
    def test_output_path_stays_in_root(self, tmp_path, output_dir):
        root = tmp_path / 'root'
        (root / 'runs').mkdir(parents=True)
        with pytest.raises(ConfigError):
            ExperimentConfig(output_dir=output_dir).output_path(str(root))

    def test_output_path_without_root_is_unrestricted(self, tmp_path):
        assert ExperimentConfig(output_dir=str(tmp_path)).output_path() == str(tmp_path)


class TestConfinement:

    def test_inside_root(self, tmp_path):
        assert confine_path(str(tmp_path), 'a/b.json') == os.path.join(os.path.realpath(tmp_path), 'a', 'b.json')
        assert confine_path(str(tmp_path), '.') == os.path.realpath(tmp_path)

    @pytest.mark.parametrize('path', ['/etc/passwd', '../x.json', 'a/../../x.json'])
    def test_outside_root(self, tmp_path, path):
        with pytest.raises(ConfigError):
            confine_path(str(tmp_path / 'root'), path)

    def test_symlink_out_of_root(self, tmp_path):
        root = tmp_path / 'root'
        root.mkdir()
        (root / 'fuga').symlink_to(tmp_path)
        with pytest.raises(ConfigError):
            confine_path(str(root), 'fuga/x.json')

    def test_confined_resolves_inputs(self, tmp_path):
        config = parse_config({'simulate': {'potential_file': 'v.json', 'resume_from': 'snap.bin'},
                               'normal_form': {'r': 2, 'nu': 0.1, 'potential_file': 'v.json'}})
        confined = config.confined(str(tmp_path))
        base = os.path.realpath(tmp_path)
        assert confined.simulate.potential_file == os.path.join(base, 'v.json')
        assert confined.simulate.resume_from == os.path.join(base, 'snap.bin')
        assert confined.normal_form.potential_file == os.path.join(base, 'v.json')
        assert confined.scan.potential_file is None
        assert config.confined(None) is config

    def test_confined_rejects_escaping_input(self, tmp_path):
        config = parse_config({'scan': {'potential_file': '../v.json'}})
        with pytest.raises(ConfigError):
            config.confined(str(tmp_path))


class TestEnvironment:

    def test_threads_default(self, monkeypatch):
        monkeypatch.delenv('NLSBNF_THREADS', raising=False)
        assert env_threads() == 1

    @pytest.mark.parametrize('raw', ['zero', '0', '-2'])
    def test_threads_invalid(self, monkeypatch, raw):
        monkeypatch.setenv('NLSBNF_THREADS', raw)
        with pytest.raises(ConfigError):
            env_threads()

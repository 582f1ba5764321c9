from pathlib import Path

import pytest
import yaml

from augseg.config import (cfg_from_list, dump_config, get_default_config, load_run_config, to_plain_dict,
                           validate_config)
from augseg.utils.exceptions import ConfigError

CFG_DIR = Path(__file__).resolve().parent.parent / 'tools' / 'cfgs'


def test_shipped_model_config_matches_defaults():
    cfg = load_run_config(CFG_DIR / 'augseg_models' / 'samcl.yaml')
    assert to_plain_dict(cfg) == to_plain_dict(get_default_config())
    assert cfg.MODEL.DECODER_UPSAMPLE == 'nearest'


def test_nested_base_configs_resolve_from_the_file_directory():
    cfg = load_run_config(CFG_DIR / 'augseg_models' / 'samcl_folder.yaml')
    assert cfg.DATA_CONFIG.DATASET == 'FolderSegDataset'
    assert cfg.DATA_CONFIG.NUM_TRAIN == 200
    assert load_run_config(CFG_DIR / 'augseg_models' / 'samcl_oracle.yaml').CONTINUAL.MODE == 'samcl-oracle'


@pytest.mark.parametrize('cfg_file', sorted((CFG_DIR / 'ablations').glob('*.yaml')))
def test_ablation_configs_load(cfg_file):
    cfg = load_run_config(cfg_file)
    assert cfg.ABLATION.KIND == cfg_file.stem.replace('_', '-')


def test_set_overrides():
    cfg = load_run_config(set_cfgs=['ADAPTER.RANK', '10', 'OPTIMIZATION.LR', '1', 'ADAPTER.SITES', 'attn_query',
                                    'DATA_CONFIG.PERMUTATION', '[4,3,2,1,0]'])
    assert cfg.ADAPTER.RANK == 10
    assert cfg.OPTIMIZATION.LR == 1.0 and isinstance(cfg.OPTIMIZATION.LR, float)
    assert cfg.ADAPTER.SITES == ['attn_query']
    assert cfg.DATA_CONFIG.PERMUTATION == [4, 3, 2, 1, 0]


def test_bad_overrides_raise_config_error():
    cfg = get_default_config()
    with pytest.raises(ConfigError):
        cfg_from_list(['ADAPTER.NOPE', '1'], cfg)
    with pytest.raises(ConfigError):
        cfg_from_list(['ADAPTER.RANK'], cfg)
    with pytest.raises(ConfigError):
        cfg_from_list(['ADAPTER.VARIANT', '3'], cfg)


@pytest.mark.parametrize('key, value', [
    ('ADAPTER.VARIANT', 'dora'),
    ('ADAPTER.START_BLOCK', '8'),
    ('ADAPTER.RANK', '0'),
    ('MODEL.PATCH_SIZE', '7'),
    ('DATA_CONFIG.DOMAINS', "['base-shapes']"),
    ('CONTINUAL.MODE', 'replay'),
    ('SCHEMA_VERSION', '2'),
    ('SELECTOR.NUM_EPOCHS', '26'),
])
def test_validation_failures(key, value):
    with pytest.raises(ConfigError):
        load_run_config(set_cfgs=[key, value])


def test_missing_and_unparsable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / 'missing.yaml')
    bad = tmp_path / 'bad.yaml'
    bad.write_text('MODEL: [unclosed\n')
    with pytest.raises(ConfigError):
        load_run_config(bad)


def test_dump_config_round_trip(tmp_path):
    cfg = validate_config(get_default_config())
    path = tmp_path / 'config.yaml'
    dump_config(cfg, path)
    with open(path) as f:
        assert yaml.safe_load(f) == to_plain_dict(cfg)
    assert load_run_config(path) == cfg

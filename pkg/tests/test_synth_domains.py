import numpy as np
import pytest
from skimage import io

from augseg.config import DOMAIN_KINDS
from augseg.datasets import build_dataloader, build_dataset
from augseg.datasets.custom.folder_dataset import FolderSegDataset, create_folder_dataset
from augseg.datasets.synth.synth_domains import DomainSpec, generate_domain, get_domain_spec, sample_prompts
from augseg.utils.exceptions import ArtifactFormatError, ValidationError


@pytest.mark.parametrize('kind', DOMAIN_KINDS)
def test_samples_respect_area_range_and_prompts(kind):
    spec = get_domain_spec(kind)
    lo, hi = spec.area_range
    for sample in generate_domain(spec, 4, seed=3, image_size=32, num_prompts=3):
        assert sample.image.shape == (3, 32, 32) and sample.image.dtype == np.float64
        assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
        assert set(np.unique(sample.mask)) <= {0, 1}
        assert lo <= sample.mask.mean() <= hi
        points = sample.prompts.to_array()
        assert len(set(map(tuple, points))) == 3
        assert all(sample.mask[r, c] == 1 for r, c in points)


def test_generation_is_deterministic():
    spec = get_domain_spec('camouflage-texture')
    a = generate_domain(spec, 3, seed=7, image_size=32)
    b = generate_domain(spec, 3, seed=7, image_size=32)
    for x, y in zip(a, b):
        assert np.array_equal(x.image, y.image) and np.array_equal(x.mask, y.mask)
        assert x.prompts == y.prompts


def test_train_and_test_streams_differ():
    spec = get_domain_spec('bright-blob')
    train = generate_domain(spec, 2, seed=0, split='train', image_size=32)
    test = generate_domain(spec, 2, seed=0, split='test', image_size=32)
    assert not np.array_equal(train[0].image, test[0].image)
    other_seed = generate_domain(spec, 1, seed=1, split='train', image_size=32)
    assert not np.array_equal(train[0].image, other_seed[0].image)


def test_invalid_specs_are_rejected():
    with pytest.raises(ValidationError):
        DomainSpec('bright-blob', area_range=(0.3, 0.2)).validate()
    with pytest.raises(ValidationError):
        DomainSpec('bright-blob', area_range=(0.01, 0.2)).validate()
    with pytest.raises(ValidationError):
        DomainSpec('unknown-domain').validate()
    with pytest.raises(ValidationError):
        get_domain_spec('bright-blob', {'contrast': 0.0})
    with pytest.raises(ValidationError):
        generate_domain(get_domain_spec('bright-blob'), 0, seed=0)


def test_prompt_sampling_errors_and_seeding():
    mask = np.zeros((4, 4), dtype=np.uint8)
    with pytest.raises(ValidationError):
        sample_prompts(mask, 1, seed=0)
    mask[0, :2] = 1
    with pytest.raises(ValidationError):
        sample_prompts(mask, 3, seed=0)
    assert sample_prompts(mask, 2, seed=5) == sample_prompts(mask, 2, seed=5)
    assert sorted(sample_prompts(mask, 2, seed=5).points) == [(0, 0), (0, 1)]


def test_single_prompt_is_uniform_over_mask_pixels():
    mask = np.zeros((4, 4), dtype=np.uint8)
    mask[2, 1] = 1
    assert sample_prompts(mask, 1, seed=0).points == ((2, 1),)
    mask[3, 3] = 1
    draws = [sample_prompts(mask, 1, seed=s).points[0] for s in range(1000)]
    assert set(draws) == {(2, 1), (3, 3)}
    assert abs(draws.count((2, 1)) / 1000 - 0.5) <= 0.05


def test_synth_dataset_batches(tiny_cfg):
    dataset = build_dataset(tiny_cfg.DATA_CONFIG, tiny_cfg.MODEL, 'shadow-region', 'train', seed=0)
    assert len(dataset) == tiny_cfg.DATA_CONFIG.NUM_TRAIN
    batch = next(iter(build_dataloader(dataset, batch_size=4, seed=0)))
    assert batch['batch_size'] == 4
    assert batch['images'].shape == (4, 3, 16, 16)
    assert batch['heatmaps'].shape == (4, 4, 4)
    assert batch['prompts'].shape == (4, 2, 2)


def test_folder_dataset_round_trip(tiny_cfg, tmp_path):
    data_cfg = tiny_cfg.DATA_CONFIG
    manifest = create_folder_dataset(data_cfg, tmp_path, seed=2, image_size=16, domains=['noisy-lesion'])
    assert (tmp_path / 'manifest.json').exists()
    assert list(manifest['domains']) == ['noisy-lesion']

    loaded = FolderSegDataset(data_cfg, tiny_cfg.MODEL, 'noisy-lesion', split='test', root_path=tmp_path)
    generated = generate_domain(get_domain_spec('noisy-lesion'), data_cfg.NUM_TEST, seed=2, split='test',
                                image_size=16, num_prompts=data_cfg.NUM_PROMPTS)
    assert len(loaded) == len(generated)
    for a, b in zip(loaded.samples, generated):
        assert np.array_equal(a.mask, b.mask) and a.prompts == b.prompts
        assert np.abs(a.image - b.image).max() <= 0.5 / 255 + 1e-12

    with pytest.raises(ArtifactFormatError):
        FolderSegDataset(data_cfg, tiny_cfg.MODEL, 'bright-blob', split='test', root_path=tmp_path)
    with pytest.raises(ArtifactFormatError):
        FolderSegDataset(data_cfg, tiny_cfg.MODEL, 'noisy-lesion', root_path=tmp_path / 'missing')


def test_folder_images_are_netpbm_readable_by_skimage(tiny_cfg, tmp_path):
    manifest = create_folder_dataset(tiny_cfg.DATA_CONFIG, tmp_path, seed=0, image_size=16, domains=['bright-blob'])
    entry = manifest['domains']['bright-blob']['splits']['train'][0]
    image = io.imread(str(tmp_path / entry['image']))
    mask = io.imread(str(tmp_path / entry['mask']))
    assert image.shape == (16, 16, 3) and image.dtype == np.uint8
    assert mask.shape == (16, 16) and set(np.unique(mask)) <= {0, 255}

    io.imsave(str(tmp_path / entry['mask']), np.zeros((8, 8), dtype=np.uint8), check_contrast=False)
    with pytest.raises(ArtifactFormatError, match='differ'):
        FolderSegDataset(tiny_cfg.DATA_CONFIG, tiny_cfg.MODEL, 'bright-blob', split='train', root_path=tmp_path)

    (tmp_path / entry['mask']).write_bytes(b'not an image')
    with pytest.raises(ArtifactFormatError):
        FolderSegDataset(tiny_cfg.DATA_CONFIG, tiny_cfg.MODEL, 'bright-blob', split='train', root_path=tmp_path)

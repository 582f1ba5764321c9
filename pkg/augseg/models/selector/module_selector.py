"""
Module selector: routes an input image to the adapter of the task it most likely came from.

Embeddings are the spatial mean of the frozen encoder's block-k output. Each finished task
leaves at most M of them in an EmbeddingBuffer; a small MLP is retrained from scratch on the
whole buffer every time a task is added.
"""
from collections import OrderedDict, namedtuple

import numpy as np
import torch
import torch.nn as nn
import tqdm

from ...config import MAX_SELECTOR_EPOCHS
from ...utils import common_utils, file_utils, tensor_utils
from ...utils.exceptions import ArtifactFormatError, DimensionError, StateError, ValidationError

SelectionResult = namedtuple('SelectionResult', ['task_id', 'logits', 'block'])


def extract_embedding(activations, k):
    """
    Args:
        activations: list of per-block (B, H', W', D) outputs (index 0 = patch embedding),
            or a single (B, H', W', D) tensor already taken at block k
        k: block index
    Returns:
        (B, D) pooled embeddings
    """
    if isinstance(activations, torch.Tensor):
        return tensor_utils.mean_pool_hw(activations)
    if not 0 <= k < len(activations):
        raise IndexError('block index %d out of range [0, %d]' % (k, len(activations) - 1))
    return tensor_utils.mean_pool_hw(activations[k])


class EmbeddingBuffer(object):
    """Per-task store of pooled D-vectors, at most `cap` per task, in task insertion order."""

    def __init__(self, cap, embed_dim):
        self.cap = int(cap)
        self.embed_dim = int(embed_dim)
        self.entries = OrderedDict()

    @property
    def task_ids(self):
        return list(self.entries.keys())

    @property
    def num_tasks(self):
        return len(self.entries)

    def __len__(self):
        return sum(v.shape[0] for v in self.entries.values())

    def counts(self):
        return [int(v.shape[0]) for v in self.entries.values()]

    def add(self, task_id, embeddings, seed):
        """Keep min(cap, n) of the n candidate rows, chosen uniformly without replacement."""
        task_id = int(task_id)
        if task_id in self.entries:
            raise StateError('task %d is already buffered' % task_id)
        if isinstance(embeddings, torch.Tensor):
            embeddings = embeddings.detach().cpu().numpy()
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[1] != self.embed_dim:
            raise DimensionError('buffer expects (n, %d) embeddings, got %s' % (self.embed_dim, embeddings.shape))
        rng = np.random.default_rng(seed)
        index = rng.choice(embeddings.shape[0], size=min(self.cap, embeddings.shape[0]), replace=False)
        self.entries[task_id] = embeddings[index].copy()
        return self

    def as_arrays(self):
        """Returns (X (N, D), labels (N,)) with labels = position of the task in insertion order."""
        if self.num_tasks == 0:
            raise StateError('embedding buffer is empty')
        xs, ys = [], []
        for label, vecs in enumerate(self.entries.values()):
            xs.append(vecs)
            ys.append(np.full(vecs.shape[0], label, dtype=np.int64))
        return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)

    def nbytes(self, float_bytes=8):
        return len(self) * self.embed_dim * float_bytes

    def save(self, path):
        meta = {'cap': self.cap, 'embed_dim': self.embed_dim, 'task_ids': self.task_ids, 'counts': self.counts()}
        tensors = OrderedDict(('task%d' % t, v) for t, v in self.entries.items())
        return file_utils.write_container(path, file_utils.MAGIC_BUFFER, meta, tensors)

    @classmethod
    def load(cls, path):
        meta, tensors, _ = file_utils.read_container(path, file_utils.MAGIC_BUFFER)
        try:
            buffer = cls(meta['cap'], meta['embed_dim'])
            layout = list(zip(meta['task_ids'], meta['counts']))
        except (KeyError, TypeError) as e:
            raise ArtifactFormatError('%s: incomplete buffer metadata: %s' % (path, e))
        if len(layout) != len(meta['task_ids']) or len(layout) != len(meta['counts']) or \
                sorted(tensors) != sorted('task%d' % t for t, _ in layout):
            raise ArtifactFormatError('%s: buffer tensors %s do not match task ids %s'
                                      % (path, sorted(tensors), meta['task_ids']))
        for task_id, count in layout:
            vecs = tensors['task%d' % task_id]
            if vecs.shape != (count, buffer.embed_dim) or count > buffer.cap:
                raise ArtifactFormatError('%s: task %d holds %s embeddings, expected (%d, %d) with cap %d'
                                          % (path, task_id, vecs.shape, count, buffer.embed_dim, buffer.cap))
            buffer.entries[int(task_id)] = vecs
        return buffer


class SelectorMLP(nn.Module):
    """D -> D -> D/4 -> D/4 -> T with GELU in between, on standardised embeddings."""

    def __init__(self, embed_dim, num_tasks):
        super().__init__()
        self.embed_dim = embed_dim
        self.num_tasks = num_tasks
        widths = [embed_dim, embed_dim, embed_dim // 4, embed_dim // 4, num_tasks]
        self.layers = nn.ModuleList([nn.Linear(widths[i], widths[i + 1]) for i in range(len(widths) - 1)])
        self.register_buffer('input_mean', torch.zeros(embed_dim))
        self.register_buffer('input_std', torch.ones(embed_dim))
        self.to(tensor_utils.DTYPE)

    def forward(self, x):
        if x.dim() != 2 or x.shape[1] != self.embed_dim:
            raise DimensionError('selector expects (B, %d) embeddings, got %s' % (self.embed_dim, tuple(x.shape)))
        x = (x - self.input_mean) / self.input_std
        for i, layer in enumerate(self.layers):
            x = tensor_utils.linear(x, layer.weight, layer.bias)
            if i < len(self.layers) - 1:
                x = tensor_utils.gelu(x)
        return x

    def num_params(self):
        return sum(p.numel() for p in self.parameters())

    def save(self, path, block=None):
        meta = {'embed_dim': self.embed_dim, 'num_tasks': self.num_tasks, 'block': block}
        return file_utils.write_container(path, file_utils.MAGIC_SELECTOR, meta, self.state_dict())

    @classmethod
    def load(cls, path):
        meta, tensors, _ = file_utils.read_container(path, file_utils.MAGIC_SELECTOR)
        mlp = cls(meta['embed_dim'], meta['num_tasks'])
        mlp.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()}, strict=True)
        mlp.eval()
        return mlp, meta


def train_selector(buffer, selector_cfg, seed, logger=None):
    """
    Fresh SelectorMLP trained from scratch on every buffered embedding with cross-entropy.

    Returns:
        mlp: trained SelectorMLP with output width = buffer.num_tasks
        train_acc: accuracy on the buffer itself
    """
    logger = common_utils.get_logger(logger)
    if not 0 <= selector_cfg.NUM_EPOCHS <= MAX_SELECTOR_EPOCHS:
        raise ValidationError('selector epochs must lie in [0, %d], got %s'
                              % (MAX_SELECTOR_EPOCHS, selector_cfg.NUM_EPOCHS))
    x_np, y_np = buffer.as_arrays()
    x = torch.from_numpy(x_np)
    y = torch.from_numpy(y_np)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        mlp = SelectorMLP(buffer.embed_dim, buffer.num_tasks)
    mlp.input_mean.copy_(x.mean(dim=0))
    mlp.input_std.copy_(x.std(dim=0, unbiased=False).clamp(min=1e-8))

    optimizer = torch.optim.Adam(mlp.parameters(), lr=selector_cfg.LR, weight_decay=selector_cfg.WEIGHT_DECAY)
    generator = common_utils.make_generator(seed)
    batch_size = selector_cfg.BATCH_SIZE
    mlp.train()
    for _ in tqdm.trange(selector_cfg.NUM_EPOCHS, desc='selector', leave=False, dynamic_ncols=True):
        order = torch.randperm(x.shape[0], generator=generator)
        for start in range(0, x.shape[0], batch_size):
            index = order[start:start + batch_size]
            loss = tensor_utils.cross_entropy(mlp(x[index]), y[index])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    mlp.eval()

    train_acc = selection_accuracy(mlp, x, y_np)
    logger.info('selector: %d tasks, %d embeddings, train acc %.4f' % (buffer.num_tasks, x.shape[0], train_acc))
    return mlp, train_acc


def select(mlp, embedding, block=None):
    """
    Args:
        embedding: (D,) or (1, D)
    Returns:
        SelectionResult; ties go to the lower task id
    """
    if embedding.dim() == 1:
        embedding = embedding.unsqueeze(0)
    if embedding.shape != (1, mlp.embed_dim):
        raise DimensionError('select expects one %d-dim embedding, got %s' % (mlp.embed_dim, tuple(embedding.shape)))
    with torch.no_grad():
        logits = mlp(embedding)[0].cpu().numpy()
    return SelectionResult(int(np.argmax(logits)), logits, block)


def select_batch(mlp, embeddings, block=None):
    """Row by row, so a selection never depends on what else is in the batch."""
    return [select(mlp, embeddings[i], block=block) for i in range(embeddings.shape[0])]


def selection_accuracy(mlp, embeddings, labels):
    if embeddings.shape[0] == 0:
        return 0.0
    predicted = np.array([r.task_id for r in select_batch(mlp, embeddings)])
    return float((predicted == np.asarray(labels)).mean())


def storage_report(buffer, mlp, image_shape, float_bytes=8, image_byte_depth=1):
    """
    Byte accounting of the selector side.

    Args:
        image_shape: (C, H, W) of one raw input image
    """
    channels, height, width = image_shape
    per_vector = buffer.embed_dim * float_bytes
    return {
        'buffer_bytes': buffer.nbytes(float_bytes),
        'selector_bytes': mlp.num_params() * float_bytes if mlp is not None else 0,
        'per_task_bytes': buffer.cap * per_vector,
        'raw_image_ratio': channels * height * width * image_byte_depth / per_vector,
    }

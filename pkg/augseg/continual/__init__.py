from .ablation import ablate, parse_sweep_spec, sweep_grid
from .eval_utils import evaluate_dataset, infer_with_adapter, infer_with_selection
from .harness import ModuleSet, baseline_sequential, load_adapter_set, run_continual, save_adapter_set
from .report_utils import build_report, format_report
from .run_record import RunRecord, load_run
from .task_stream import TaskStream, build_base_splits, build_task_stream, permute_stream
from .train_utils import derive_seed, pretrain_base, train_task

__all__ = [
    'ablate', 'parse_sweep_spec', 'sweep_grid',
    'evaluate_dataset', 'infer_with_adapter', 'infer_with_selection',
    'ModuleSet', 'baseline_sequential', 'load_adapter_set', 'run_continual', 'save_adapter_set',
    'build_report', 'format_report',
    'RunRecord', 'load_run',
    'TaskStream', 'build_base_splits', 'build_task_stream', 'permute_stream',
    'derive_seed', 'pretrain_base', 'train_task',
]

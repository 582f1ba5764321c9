from .module_selector import (EmbeddingBuffer, SelectionResult, SelectorMLP, extract_embedding, select, select_batch,
                              selection_accuracy, storage_report, train_selector)

from .injection import AdaptedSegmentor, inject
from .lora import (AdapterSet, AdapterVariant, LoRAPair, SiteId, build_adapter_set, forward_aug, forward_slora,
                   forward_vanilla)
from .param_count import ParamCount, count_adapter_set, count_params

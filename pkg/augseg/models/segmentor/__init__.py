from .mask_decoder import MaskDecoder
from .prompt_heatmap import PromptSet, make_heatmap
from .promptable_segmentor import EncoderOutput, PromptableSegmentor
from .vit_encoder import EncoderBlock, ImageEncoder

__all__ = {
    'PromptableSegmentor': PromptableSegmentor,
}

from ...utils.exceptions import InjectionOrderError, StateError


class AdaptedSegmentor(object):
    """
    Forward handle returned by inject(): the frozen model with one adapter set routed into its
    sites. The base model itself is never modified, so eject() only drops the routing.
    """

    def __init__(self, model, adapter_set):
        self.model = model
        self.adapter_set = adapter_set
        self.attached = True

    def _adapters(self):
        if not self.attached:
            raise StateError('adapter set of task %d has been ejected' % self.adapter_set.task_id)
        return self.adapter_set

    def encode(self, images, heatmaps=None, extract_block=None):
        return self.model.encode(images, adapters=self._adapters(), heatmaps=heatmaps, extract_block=extract_block)

    def resume(self, activation_k, k, heatmaps=None):
        return self.model.resume(activation_k, k, adapters=self._adapters(), heatmaps=heatmaps)

    def __call__(self, batch_dict):
        return self.model(batch_dict, adapters=self._adapters())

    def eject(self):
        self.attached = False
        return self.model


def inject(model, adapter_set):
    """
    Route adapter_set's sites through its low-rank update. Every site must lie in a block after
    adapter_set.start_block and match the model's layer dims.
    """
    for site in adapter_set.sites:
        if site.block <= adapter_set.start_block:
            raise InjectionOrderError('site %s lies in block %d <= start block %d'
                                      % (site.key, site.block, adapter_set.start_block))
    model.check_adapters(adapter_set, extract_block=adapter_set.start_block)
    return AdaptedSegmentor(model, adapter_set)

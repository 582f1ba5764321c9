from collections import namedtuple

from ...utils.exceptions import InjectionSiteError
from .lora import AdapterVariant

ParamCount = namedtuple('ParamCount', ['trainable_count', 'stored_count', 'stored_bytes'])

FLOAT_BYTES = 8


def count_params(variant, sites, r, dims, embed_dim=None, float_bytes=FLOAT_BYTES):
    """
    Closed-form parameter accounting for one task's adapter.

    Args:
        variant: AdapterVariant or its string value
        sites: iterable of site identifiers (only their number matters)
        r: rank
        dims: list of (d_in, d_out), one per site
        embed_dim: width of the shared A; taken from dims when omitted, required for shared-A
            variants without sites
        float_bytes: bytes per stored scalar
    Returns:
        ParamCount(trainable_count, stored_count, stored_bytes)
    """
    variant = AdapterVariant(variant)
    sites = list(sites)
    dims = [tuple(d) for d in dims]
    if len(sites) != len(dims):
        raise InjectionSiteError('%d sites but %d (d_in, d_out) pairs' % (len(sites), len(dims)))
    if r == 0:
        return ParamCount(0, 0, 0)

    sum_in = sum(d_in for d_in, _ in dims)
    sum_out = sum(d_out for _, d_out in dims)
    if variant.shared_a:
        d_ins = {d_in for d_in, _ in dims} | ({embed_dim} if embed_dim is not None else set())
        if len(d_ins) != 1:
            raise InjectionSiteError('shared A needs one input dim across sites, got %s' % sorted(d_ins))
        D = d_ins.pop()

    if variant is AdapterVariant.VANILLA:
        trainable = stored = r * (sum_in + sum_out)
    elif variant is AdapterVariant.FROZEN_A:
        trainable = r * sum_out
        stored = r * (sum_in + sum_out)
    elif variant is AdapterVariant.SLORA:
        trainable = stored = r * D + r * sum_out
    else:
        trainable = stored = r * D + r * sum_out + len(sites) * r * r + 2 * r

    return ParamCount(trainable, stored, stored * float_bytes)


def count_adapter_set(adapter_set, float_bytes=FLOAT_BYTES):
    keys = adapter_set.site_keys
    return count_params(adapter_set.variant, keys, adapter_set.rank, [adapter_set.dims[k] for k in keys],
                        embed_dim=adapter_set.embed_dim if adapter_set.variant.shared_a else None,
                        float_bytes=float_bytes)

from .synth_dataset import SynthDomainDataset
from .synth_domains import DEFAULT_SPECS, DomainSpec, Sample, generate_domain, get_domain_spec, sample_prompts

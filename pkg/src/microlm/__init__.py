"""On-device micro language model inference with commit-and-continue handoff.

A small decoder-only transformer runs locally and commits the first few
words of an answer immediately; a cloud model continues the committed text
without ever editing it. The package covers the float32 inference stack
(kernels, model, KV cache, weights container), the byte-level BPE
tokenizer, budgeted opener decoding, the handoff client and orchestrator,
latency/energy metrics, training-data contamination checks, and an SSE
service plus CLI.
"""

from .decoder import SamplingPolicy, count_words, generate_opener, sample
from .handoff import (
    RECOVERY_MODES,
    CloudEndpointConfig,
    build_continuation_prompt,
    detect_correction,
    request_continuation,
    run_collaborative,
    stitch,
)
from .metrics import (
    EnergyReading,
    SessionTimeline,
    compute_correction_rate,
    compute_dynamic_energy,
    compute_throughputs,
    compute_time_to_n_words,
    compute_ttft,
)
from .model import (
    Model,
    ModelConfig,
    compute_step_budget,
    load_model,
    paper_config,
    param_count,
    param_count_label,
    random_weights,
    save_model,
)
from .tokenizer import (
    ChatTranscript,
    StreamingDecoder,
    TokenizerModel,
    Turn,
    load_tokenizer,
    render_chat,
    save_tokenizer,
    train_bpe,
)

__version__ = "0.1.0"

"""modelbridge: typed feature exchange between a host process and ML models.

The package separates three concerns so each can be swapped independently:

- tensors: ordered, keyed, typed feature bundles;
- serdes: three bit-exact wire formats (json, bitstream, tagged);
- runners: where the model lives (in-process, named pipes, sockets).
"""

from .bench import (
    CSV_HEADER,
    MockPhaseEnv,
    RttRecord,
    SweepConfig,
    cumulative_rtt_micros,
    free_port,
    input_vector,
    iter_rtt_sweep,
    mock_phase_env,
    rtt_sweep,
    spawned_peer,
    sum_model,
)
from .errors import (
    Malformed,
    ModelError,
    PeerClosed,
    RetriesExhausted,
    RunnerError,
    Timeout,
    TypeMismatch,
)
from .framing import MAX_FRAME_BYTES, ByteChannel, frame_read, frame_write
from .inproc import (
    Activation,
    Environment,
    EpisodeStep,
    EpisodeTrace,
    InprocRunner,
    MlpLayer,
    MlpModel,
    agent_act,
    inproc_runner,
    load_model,
    mlp_forward,
    random_model,
    run_episode,
    save_model,
)
from .runner import Handler, ModelRunner
from .serdes import (
    ERROR_KEY,
    SerDesKind,
    deserialize,
    payload_size,
    serialize,
    validate_expected,
)
from .tensors import DType, FeatureBundle, TensorSpec, TensorValue
from .transport import (
    PipeEndpoints,
    PipeRunner,
    RetryPolicy,
    RpcEndpoint,
    RpcRunner,
    RunnerMode,
    open_multi_worker,
    pipe_runner_open,
    rpc_runner_open,
    serve_training,
)

__version__ = "0.1.0"

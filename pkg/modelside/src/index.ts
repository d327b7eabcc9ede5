export {
  Malformed,
  ModelError,
  PeerClosed,
  RetriesExhausted,
  RunnerError,
  Timeout,
  TypeMismatch,
} from "./errors.js";
export {
  DType,
  ELEMENT_BYTES,
  FeatureBundle,
  TensorSpec,
  TensorValue,
  checkKey,
  elementCount,
  sameShape,
  validateExpected,
} from "./tensors.js";
export { pyFloatRepr } from "./pyfloat.js";
export {
  ERROR_KEY,
  SerDesKind,
  deserialize,
  errorBundle,
  payloadSize,
  serialize,
} from "./serdes.js";
export {
  Conn,
  FifoConn,
  MAX_FRAME_BYTES,
  SocketConn,
  frameRead,
  frameWrite,
} from "./framing.js";
export {
  DEFAULT_POLICY,
  ModelHandler,
  RetryPolicy,
  ServeOptions,
  SideConfig,
  SideRole,
  SideSession,
  Transport,
  sideQuery,
  sideServe,
} from "./side.js";

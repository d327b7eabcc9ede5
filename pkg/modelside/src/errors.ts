export class RunnerError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class Timeout extends RunnerError {
  constructor(readonly elapsedMs: number, context: string) {
    super(`timed out after ${elapsedMs.toFixed(0)}ms: ${context}`);
  }
}

export class PeerClosed extends RunnerError {
  constructor(detail: string) {
    super(`peer closed: ${detail}`);
  }
}

export class Malformed extends RunnerError {
  constructor(reason: string) {
    super(`malformed: ${reason}`);
  }
}

export class TypeMismatch extends RunnerError {
  constructor(readonly key: string, readonly expected: string, readonly found: string) {
    super(`type mismatch for "${key}": expected ${expected}, found ${found}`);
  }
}

export class ModelError extends RunnerError {
  constructor(message: string) {
    super(message);
  }
}

export class RetriesExhausted extends RunnerError {
  constructor(
    readonly attempts: number,
    readonly attemptOffsetsMs: number[],
    readonly cause2: string,
  ) {
    super(`gave up after ${attempts} attempts: ${cause2}`);
  }
}

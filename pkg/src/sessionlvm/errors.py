"""Exception types shared across the package."""


class SessionDataError(ValueError):
    """Malformed or out-of-range session data (bad CSV rows, unknown item ids)."""


class NumericError(RuntimeError):
    """A numeric computation hit non-finite values or a degenerate matrix."""


class TrainingError(NumericError):
    """Training aborted; records where in the run the failure happened."""

    def __init__(self, message, epoch=None, batch=None, session_id=None):
        parts = [message]
        if epoch is not None:
            parts.append(f"epoch {epoch}")
        if batch is not None:
            parts.append(f"batch {batch}")
        if session_id is not None:
            parts.append(f"session {session_id!r}")
        super().__init__(" @ ".join(parts))
        self.epoch = epoch
        self.batch = batch
        self.session_id = session_id

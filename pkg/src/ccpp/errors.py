"""Solver failure type shared by both planning stages."""


class PlanningError(RuntimeError):
    """A solver run that could not produce a plan.

    ``category`` is a short machine-readable tag (e.g. "epoch infeasible"),
    ``epoch`` the goal index at which the failure happened, if any.
    """

    def __init__(self, category, message="", epoch=None):
        self.category = category
        self.epoch = epoch
        self.detail = message
        where = f" (epoch {epoch})" if epoch is not None else ""
        super().__init__(f"{category}{where}: {message}" if message else f"{category}{where}")


def at_epoch(exc: PlanningError, epoch: int) -> PlanningError:
    """Copy of ``exc`` tagged with an epoch index (kept if already set)."""
    if exc.epoch is not None:
        return exc
    return PlanningError(exc.category, exc.detail, epoch)

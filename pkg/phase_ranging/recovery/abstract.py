from abc import ABC, abstractmethod
from typing import Any, ClassVar, Generic, TypeVar, final

from pydantic import BaseModel, Field, create_model

from phase_ranging.models import GapMap, TwoWayResponse

__all__ = ("AbstractRecovery",)

C = TypeVar("C", bound=BaseModel)


class AbstractRecovery(ABC, Generic[C]):
    """The abstract class for a backend that fills tone gaps in a two-way response."""

    config: ClassVar[type[BaseModel]]
    name: ClassVar[str]

    ALL_RECOVERIES: ClassVar[list[type["AbstractRecovery"]]] = []

    def __init__(self, recovery_config: C | None = None) -> None:
        """Initialize the recovery.

        :param recovery_config: The backend settings; the defaults when omitted.
        """
        self.recovery_config: C = recovery_config if recovery_config is not None else self.config()

    def __init_subclass__(cls, **kwargs: Any) -> None:
        """Register the subclass."""
        super().__init_subclass__(**kwargs)
        if not getattr(cls, "name", None):
            raise ValueError("Recovery must have a name")
        if not getattr(cls, "config", None) or not isinstance(cls.config, type):
            raise ValueError("Recovery must have a config")
        if cls.name in {r.name for r in AbstractRecovery.ALL_RECOVERIES}:
            raise ValueError(f"Recovery {cls.name} already exists")

        AbstractRecovery.ALL_RECOVERIES.append(cls)

    @abstractmethod
    def recover(self, resp: TwoWayResponse, gaps: GapMap) -> TwoWayResponse:
        """Fill the unavailable tones of `resp`.

        :param resp: The two-way response with gaps.
        :param gaps: The gap map behind the unavailable tones.
        :return: A response with every recovered tone marked available.
        """
        raise NotImplementedError

    @classmethod
    def by_name(cls, name: str) -> type["AbstractRecovery"]:
        """Look up a registered recovery.

        :param name: The recovery name.
        :raise ValueError: If no recovery has that name.
        :return: The recovery class.
        """
        for recovery in AbstractRecovery.ALL_RECOVERIES:
            if recovery.name == name:
                return recovery
        raise ValueError(f"Unknown recovery {name!r}; expected one of {[r.name for r in cls.ALL_RECOVERIES]}.")

    @classmethod
    def from_settings(cls, name: str, recoveries: BaseModel) -> "AbstractRecovery":
        """Instantiate the named recovery with its section of the `Recoveries` model."""
        recovery = cls.by_name(name)
        return recovery(getattr(recoveries, name))

    @staticmethod
    @final
    def create_recovery_config_model() -> type[BaseModel]:
        """Create the recoveries config model.

        The attribute is the recovery name, the value is its config.
        :return: The recoveries model.
        """
        return create_model(
            "Recoveries",
            **{
                recovery.name: (recovery.config, Field(default_factory=recovery.config))
                for recovery in AbstractRecovery.ALL_RECOVERIES
            },
            __base__=BaseModel,
            __doc__="The configuration of the channel-recovery backends.",
        )

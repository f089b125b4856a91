"""Name-keyed registry for pluggable components.

Encoders, decoder attention variants, report writers and verification suites
all self-register here so that configuration files and CLI flags can refer to
them by name.
"""

from typing import Any, Callable, Dict, List, Type


class RegistrationError(Exception):
    """Raised when a component cannot be registered or looked up."""

    pass


class ComponentRegistry:
    """
    Registry mapping component names to classes.

    One registry exists per component kind (``"encoder"``, ``"decoder
    attention"``, ``"writer"``, ``"suite"``); the kind only shows up in error
    messages.
    """

    def __init__(self, component_type: str) -> None:
        """
        Initialize an empty registry.

        Args:
            component_type: Human-readable component kind used in messages
        """
        self._component_type = component_type
        self._registry: Dict[str, Type] = {}

    def register(
        self, name: str, component_class: Type, override: bool = False
    ) -> None:
        """
        Register a component class under a name.

        Args:
            name: Unique name for the component
            component_class: The class to register
            override: Replace an existing registration instead of failing

        Raises:
            RegistrationError: If the name is taken and override is False
        """
        if name in self._registry and not override:
            raise RegistrationError(
                f"{self._component_type} '{name}' is already registered"
            )

        self._registry[name] = component_class

    def register_decorator(self, name: str) -> Callable[[Type], Type]:
        """
        Class decorator form of :meth:`register`.

        Example:
            @encoder_registry.register_decorator("toy_conv")
            class ToyConvEncoder(Encoder):
                ...
        """

        def decorator(cls: Type) -> Type:
            self.register(name, cls)
            return cls

        return decorator

    def get(self, name: str) -> Type:
        """
        Look up a registered class.

        Raises:
            RegistrationError: If nothing is registered under ``name``
        """
        if name not in self._registry:
            available = ", ".join(self.list_available()) or "none"
            raise RegistrationError(
                f"{self._component_type} '{name}' not found. "
                f"Available: {available}"
            )

        return self._registry[name]

    def is_registered(self, name: str) -> bool:
        """Return True if ``name`` is registered."""
        return name in self._registry

    def list_available(self) -> List[str]:
        """Sorted list of registered names."""
        return sorted(self._registry.keys())

    def create(self, component_name: str, **kwargs: Any) -> Any:
        """
        Instantiate a registered component.

        Args:
            component_name: Registered name
            **kwargs: Constructor arguments

        Returns:
            A new component instance

        Raises:
            RegistrationError: If the component is not registered
            TypeError: If the constructor rejects the arguments
        """
        component_class = self.get(component_name)

        try:
            return component_class(**kwargs)
        except TypeError as e:
            raise TypeError(
                f"Failed to instantiate {self._component_type} "
                f"'{component_name}': {e}"
            ) from e

    def unregister(self, name: str) -> None:
        """
        Remove a registration (used by tests that register throwaway classes).

        Raises:
            RegistrationError: If ``name`` is not registered
        """
        if name not in self._registry:
            raise RegistrationError(
                f"{self._component_type} '{name}' not registered"
            )

        del self._registry[name]

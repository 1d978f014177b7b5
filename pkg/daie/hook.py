from typing import Any, Callable, Dict, Generic, List, TypeVar
import functools


__all__ = ['ObjectHooker', 'AggregateHooker']


ObjectType = TypeVar('ObjectType')
_MISSING = object()


class ObjectHooker(Generic[ObjectType]):
    """
    Swaps methods of one live object for wrappers while hooked. Wrappers are hooker methods taking
    `(hk_self, obj, *args)` and reach the replaced method through `call_original`. Unhooking restores the object
    exactly, removing instance attributes that did not exist before.
    """

    def __init__(self, target: ObjectType):
        self.target: ObjectType = target
        self.hooked = False
        self._originals: Dict[str, Any] = {}
        self._shadowed: Dict[str, Any] = {}

    def __enter__(self):
        self.hook()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.unhook()

    def hook(self):
        if self.hooked:
            raise RuntimeError(f'{type(self.target).__name__} is already hooked')

        self._originals.clear()
        self._shadowed.clear()
        self.hooked = True
        self._hook_impl()

        return self

    def unhook(self):
        if not self.hooked:
            raise RuntimeError(f'{type(self.target).__name__} is not hooked')

        for name, previous in self._shadowed.items():
            if previous is _MISSING:
                delattr(self.target, name)
            else:
                setattr(self.target, name, previous)

        self.hooked = False
        self._unhook_impl()

        return self

    def patch(self, name: str, fn: Callable):
        self._originals[name] = getattr(self.target, name)
        self._shadowed[name] = vars(self.target).get(name, _MISSING) if hasattr(self.target, '__dict__') else _MISSING
        setattr(self.target, name, functools.partial(fn, self.target))

    def call_original(self, name: str, *args, **kwargs):
        return self._originals[name](*args, **kwargs)

    def _hook_impl(self):
        raise NotImplementedError

    def _unhook_impl(self):
        pass


class AggregateHooker(ObjectHooker[List[ObjectHooker]]):
    """Hooks and unhooks a list of hookers together, in order."""

    def __init__(self, hookers: List[ObjectHooker]):
        super().__init__(list(hookers))

    def _hook_impl(self):
        for h in self.target:
            h.hook()

    def _unhook_impl(self):
        for h in reversed(self.target):
            h.unhook()

"""Exception types shared across the package."""


class IceSepError(Exception):
    pass


class ParseError(IceSepError, ValueError):
    pass


class UnknownGenerator(IceSepError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown generator {self.name!r}"


class MemberError(IceSepError):
    """The element to be separated already lies in the subgroup.

    ``witness`` is whatever evidence the raising routine has: a closed path,
    an integer combination, or a product expression.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SearchExhausted(IceSepError):
    pass


class ValidationError(IceSepError, ValueError):
    pass

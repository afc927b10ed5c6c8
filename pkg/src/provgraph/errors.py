"""Exception hierarchy shared across the toolkit."""


class ProvenanceError(Exception):
    """Base class for every error raised by provgraph."""


class MalformedContainer(ProvenanceError):
    """The byte stream carries no usable EXIF/TIFF container."""


class SchemaError(ProvenanceError, ValueError):
    """A JSON document does not follow its schema."""


class DanglingParent(ProvenanceError):
    """A post record names a parent that is not in the collection."""


class TooFewImages(ProvenanceError, ValueError):
    pass


class ImageTooSmall(ProvenanceError, ValueError):
    pass


class EmptyKeypoints(ProvenanceError, ValueError):
    pass


class AsymmetryError(SchemaError):
    pass


class NegativeWeight(SchemaError):
    pass


class InsufficientTrainingData(ProvenanceError, ValueError):
    pass


class EmptyIndex(ProvenanceError):
    pass


class CycleDetected(ProvenanceError, ValueError):
    pass


class SizeMismatch(ProvenanceError, ValueError):
    pass


class InvalidQueryIndex(ProvenanceError, IndexError):
    pass


class EmptyGraph(ProvenanceError, ValueError):
    pass


class EmptyCollection(ProvenanceError, ValueError):
    pass


class RootTooSmall(ProvenanceError, ValueError):
    pass


class IncompatibleMenu(ProvenanceError, ValueError):
    pass


class ConfigError(ProvenanceError, ValueError):
    pass

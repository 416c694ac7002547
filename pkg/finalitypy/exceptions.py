# -------------------------------------------------------------------------------------------------------------------- #
# Define the exception hierarchy
# -------------------------------------------------------------------------------------------------------------------- #
class FinalityError(Exception):

    """ Base class for computational failures (the CLI maps these to exit status 1) """


class NoDepthSatisfies(FinalityError):

    """ No confirmation depth up to `d_max` brings the revocation probability below the loss threshold """

    def __init__(self, value, d_max, message=None):
        self.value = value
        self.d_max = d_max
        if message is None:
            message = 'No confirmation depth up to %d satisfies the loss threshold of a $%g transaction' % (d_max, value)
        super().__init__(message)


class EmptyObservations(FinalityError):

    """ The switch histogram does not contain a single block observed at confirmation depth one """


class StructuralFault(FinalityError):

    """ The block tree is malformed (a block points to a parent that is not in the tree) """


class PoolTableError(FinalityError, ValueError):

    """ Base class for pool table parsing errors """


class MalformedRow(PoolTableError):

    def __init__(self, line_number, line, reason):
        self.line_number = line_number
        self.line = line
        super().__init__('Malformed pool table row %d (%r): %s' % (line_number, line, reason))


class EmptyTable(PoolTableError):

    """ The pool table has no rows or its block counts add up to zero """


class DuplicatePool(PoolTableError):

    def __init__(self, name):
        self.name = name
        super().__init__('Pool %r appears more than once in the table' % name)


class CsvWriteError(FinalityError, OSError):

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__('Could not write %s: %s' % (self.path, reason))

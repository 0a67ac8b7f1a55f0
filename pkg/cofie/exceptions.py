"""
Base exception shared by every cofie app.

Management commands map any CofieError to exit code 1 and print its message.
"""


class CofieError(Exception):
    """Domain error raised by library operations."""

    def __init__(self, message='', **context):
        super().__init__(message)
        self.context = context

    def __str__(self):
        message = super().__str__()
        return f"{type(self).__name__}: {message}" if message else type(self).__name__

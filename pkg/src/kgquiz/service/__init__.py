from .app import QuizState, create_app

__all__ = ["QuizState", "create_app"]

import logging
from logging.handlers import QueueHandler, QueueListener
from queue import Queue
import os
import atexit

from pythonjsonlogger import jsonlogger

from app.configs.config import config

# Garante que o diretório de logs existe
os.makedirs(config.paths.LOG_DIR, exist_ok=True)

# Fila global para logs assíncronos
log_queue = Queue()
listener = None

FORMATO_CONSOLE = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
FORMATO_JSON = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configurar_logger(nome_logger, arquivo_log=None, nivel=None,
                      formato=FORMATO_CONSOLE):
    """
    Configura um logger com arquivo JSON e fila assíncrona para o console.
    Cada módulo grava em logs/<modulo>.log; o console é servido por um único listener.
    """
    global listener

    if nivel is None:
        nivel = getattr(logging, config.runtime.LOG_LEVEL.upper(), logging.INFO)

    # Define arquivo de log
    if arquivo_log is None:
        modulo = nome_logger.split('.')[-1]
        arquivo_log = os.path.join(config.paths.LOG_DIR, f"{modulo}.log")

    logger = logging.getLogger(nome_logger)

    # Limpa handlers existentes
    if logger.hasHandlers():
        logger.handlers.clear()

    # Handler de arquivo (JSON estruturado)
    file_handler = logging.FileHandler(arquivo_log, encoding="utf-8")
    file_handler.setFormatter(jsonlogger.JsonFormatter(FORMATO_JSON))
    logger.addHandler(file_handler)

    # Handler de fila
    queue_handler = QueueHandler(log_queue)
    logger.addHandler(queue_handler)

    logger.setLevel(nivel)
    logger.propagate = False

    # Inicia listener se necessário
    if listener is None:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(formato))
        listener = QueueListener(log_queue, handler)
        listener.start()
        atexit.register(encerrar_listener)

    # Log resumido de uma etapa do pipeline
    def log_contexto(contexto_nome, resumo="Etapa concluída"):
        logger.info(f"[CONTEXT] {contexto_nome}: {resumo}")

    logger.log_contexto = log_contexto
    return logger


def encerrar_listener():
    global listener
    if listener:
        listener.stop()
        listener = None

"""Discord通知用の最小ユーティリティ。"""

from __future__ import annotations

import logging
import os

import requests

WEBHOOK_ENV_NAME = "DISCORD_WEBHOOK_URL"

LOGGER = logging.getLogger(__name__)


def send_discord_message(webhook_url: str, content: str) -> None:
    """
    Discord Webhook にテキストメッセージを送信する。

    Args:
        webhook_url: Discord Webhook URL。
        content: 送信本文。

    Raises:
        requests.exceptions.HTTPError:
            Discord API がエラーを返した場合。
    """
    payload = {"content": content}
    response = requests.post(webhook_url, json=payload, timeout=15)
    response.raise_for_status()


def resolve_discord_webhook_url(settings: dict) -> str | None:
    """環境変数 DISCORD_WEBHOOK_URL を優先し、無ければ settings の discord.webhook_url を返す。"""
    url = os.environ.get(WEBHOOK_ENV_NAME)
    if url:
        return url
    discord = settings.get("discord") or {}
    return discord.get("webhook_url") or None


def notify_run_summary(webhook_url: str | None, command: str, lines: list[str]) -> bool:
    """実行サマリを送信する。失敗しても実行自体は失敗させない。"""
    if not webhook_url:
        LOGGER.debug("notification skipped: no webhook configured")
        return False
    content = "\n".join([f"[address-clustering] {command} succeeded", *lines])
    try:
        send_discord_message(webhook_url, content)
    except requests.exceptions.RequestException as exc:
        LOGGER.warning("Discord notification failed: %s", exc)
        return False
    return True

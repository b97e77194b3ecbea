import json
import unittest
import unittest.mock

import requests
import tenacity

import slack_notifier

WEBHOOK_URL = 'https://hooks.example.invalid/services/T000/B000/XXXX'


class SlackNotifierTest(unittest.TestCase):

    def setUp(self):
        # No backoff between retried posts.
        patcher = unittest.mock.patch.object(slack_notifier._post.retry, 'wait',
                                             tenacity.wait_none())
        patcher.start()
        self.addCleanup(patcher.stop)

    @unittest.mock.patch('slack_notifier.requests.post')
    def testPostsMessageAsJson(self, mock_post):
        self.assertTrue(slack_notifier.notify_slack(WEBHOOK_URL, 'tuning done'))
        mock_post.assert_called_once()
        args, kwargs = mock_post.call_args
        self.assertEqual(args[0], WEBHOOK_URL)
        self.assertEqual(json.loads(kwargs['data']), {'text': 'tuning done'})
        self.assertEqual(kwargs['timeout'], slack_notifier.POST_TIMEOUT_SECONDS)

    @unittest.mock.patch('slack_notifier.requests.post')
    def testNoUrlLogsOnly(self, mock_post):
        self.assertFalse(slack_notifier.notify_slack('', 'tuning done'))
        self.assertFalse(slack_notifier.notify_slack(None, 'tuning done'))
        mock_post.assert_not_called()

    @unittest.mock.patch('slack_notifier.requests.post')
    def testRetriesThenGivesUpWithoutRaising(self, mock_post):
        mock_post.side_effect = requests.ConnectionError('unreachable')
        self.assertFalse(slack_notifier.notify_slack(WEBHOOK_URL, 'tuning done'))
        self.assertEqual(mock_post.call_count, 3)

    @unittest.mock.patch('slack_notifier.requests.post')
    def testRecoversAfterTransientFailure(self, mock_post):
        mock_post.side_effect = [requests.Timeout('slow'), unittest.mock.Mock()]
        self.assertTrue(slack_notifier.notify_slack(WEBHOOK_URL, 'tuning done'))
        self.assertEqual(mock_post.call_count, 2)

    def testFormatRunCompletion(self):
        message = slack_notifier.format_run_completion(
            'compare', 'step04', 'succeeded', 12.34, {'pid': 'settling 9.1 s'})
        self.assertEqual(message,
                         '`compare` on scenario `step04` succeeded in 12.3 s\npid: settling 9.1 s')
        self.assertEqual(slack_notifier.format_run_completion('tune', 's', 'failed', 1.0),
                         '`tune` on scenario `s` failed in 1.0 s')


if __name__ == '__main__':
    unittest.main()
